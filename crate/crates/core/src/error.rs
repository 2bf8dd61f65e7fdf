use std::path::PathBuf;

use thiserror::Error;

use crate::srreward::LossBreakdown;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, dimensions or settings that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data that violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Caller broke an API contract (e.g. non-scalar loss, shape mismatch in an update).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("training diverged: {msg} ({breakdown:?})")]
    Training {
        msg: String,
        breakdown: Option<LossBreakdown>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
