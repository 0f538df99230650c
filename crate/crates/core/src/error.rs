use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BdgError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("degenerate batch in {0}: at least one sample is required")]
    DegenerateBatch(&'static str),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("optimizer state error: {0}")]
    State(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for BdgError {
    fn from(err: std::io::Error) -> Self {
        BdgError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BdgError>;
