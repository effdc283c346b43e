//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by training, ingestion, checkpoints, and verification.
#[derive(Debug, Error)]
pub enum CaeError {
    /// A caller-supplied value is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Tensor shapes do not line up for the requested operation.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    /// A dataset file is missing, truncated, or fails its self-description.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// A checkpoint file is malformed or from an incompatible version.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Training diverged or produced non-finite values.
    #[error("training error: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CaeError>;

impl CaeError {
    /// Shorthand for [`CaeError::InvalidArgument`] with a formatted message.
    pub fn invalid(msg: impl Into<String>) -> Self {
        CaeError::InvalidArgument(msg.into())
    }

    /// Shorthand for a shape mismatch between an expected and an actual shape.
    pub fn shape(expected: impl std::fmt::Debug, got: impl std::fmt::Debug) -> Self {
        CaeError::ShapeMismatch {
            expected: format!("{expected:?}"),
            got: format!("{got:?}"),
        }
    }
}
