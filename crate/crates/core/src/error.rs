use thiserror::Error;

/// Errors produced by the `kac` crate.
#[derive(Debug, Error)]
pub enum KacError {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    Dimension {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("data generation failed: {0}")]
    Generation(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, KacError>;

impl KacError {
    pub(crate) fn dim(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        KacError::Dimension {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        KacError::Parameter(msg.into())
    }
}
