use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown function id {0}; implemented: 1, 2, 6, 8, 9, 10, 11, 12, 13, 14, 21, 22")]
    UnknownFunction(u32),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{0}")]
    Usage(String),

    #[error("warm start needs a source optimizer that performed at least one evaluation")]
    NoEvaluations,

    #[error("malformed record: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
