use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("ingestion error in {path} at line {line}: {msg}")]
    Ingestion {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("invalid tuple reference: {0}")]
    Reference(String),

    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("semantic error: {0}")]
    Semantic(String),

    #[error("unsupported feature: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("aggregate not estimable: {0}")]
    NotEstimable(String),

    #[error("undefined value: {0}")]
    Undefined(String),

    #[error("action space build failed: {0}")]
    Build(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("generated {achieved} of {requested} non-empty queries")]
    Generation { achieved: usize, requested: usize },

    #[error("not initialized: {0}")]
    NotInitialized(String),

    #[error("selection failed: {0}")]
    Selection(String),

    #[error("routing error: {0}")]
    Routing(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input (parse, schema, arguments).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Ingestion { .. }
                | Error::Syntax { .. }
                | Error::Semantic(_)
                | Error::Unsupported(_)
                | Error::Argument(_)
                | Error::Config(_)
                | Error::Format(_)
        )
    }
}
