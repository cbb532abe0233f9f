//! Approximation-set selection for select-project-join workloads.

pub mod action_space;
pub mod baselines;
pub mod error;
pub mod mediator;
pub mod par;
pub mod query;
pub mod relational;
pub mod rl;
pub mod scoring;
pub mod stats;
pub mod synth;
pub mod workload;

pub use error::{Error, Result};
pub use par::Exec;
