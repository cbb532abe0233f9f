//! Command-line driver and benchmark harness.

pub mod commands;
pub mod config;
pub mod report;
pub mod select;

use asqp::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// 2 for bad input, 3 for anything that failed at run time.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}
