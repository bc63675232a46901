//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents incompatible for the requested operation.
    #[error("dimension mismatch in {op}: left shape {left:?}, right shape {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A caller violated an API precondition (empty batch, non-scalar loss, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A forward operation produced a NaN or infinity from finite inputs.
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    /// Malformed dataset line.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A sample failed validation.
    #[error("validation error in sample {sample}: {message}")]
    Validation { sample: usize, message: String },

    /// The generator could not satisfy its constraints.
    #[error("generation failed for sample {sample}: {message}")]
    Generation { sample: usize, message: String },

    /// Invalid configuration value.
    #[error("invalid config: {0}")]
    Config(String),

    /// Checkpoint incompatible with the requested model or dataset.
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    /// Training diverged.
    #[error("numeric failure at epoch {epoch}, sample {sample}: {message}")]
    Numeric {
        epoch: usize,
        sample: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
