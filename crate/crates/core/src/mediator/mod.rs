//! Inference-time front end: answerability estimates, routing between the
//! approximation set and the full database, drift detection and the REPL.

pub mod drift;
pub mod estimator;
pub mod repl;
pub mod routing;
pub mod session;

pub use drift::{DriftEntry, DriftState};
pub use estimator::{achieved_ratio, Estimate, Estimator, EstimatorParams};
pub use repl::{render, repl, ReplOptions};
pub use routing::{route, run_on, Mode, Routed, Source};
pub use session::{log_line, session_score, Answer, FinetuneReport, Session, SessionStats, Tuner};
