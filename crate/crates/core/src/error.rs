use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FacError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FacError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("numeric failure in {0}")]
    NumericFailure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("capacity exceeded: {needed} policies to enumerate, limit {limit}")]
    Capacity { needed: u128, limit: u128 },

    #[error("replay buffer not ready: {size} transitions stored, batch of {batch} requested")]
    NotReady { size: usize, batch: usize },

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FacError {
    pub(crate) fn numeric(what: impl Into<String>) -> Self {
        FacError::NumericFailure(what.into())
    }
}
