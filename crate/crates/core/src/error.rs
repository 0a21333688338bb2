use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix or vector had an unusable shape (zero size, non-square, wrong length).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Two operands that must share a dimension do not.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("circuit error: {0}")]
    Circuit(String),

    #[error("dataset error at row {row}: {message}")]
    Dataset { row: usize, message: String },

    #[error("planner error: {0}")]
    Planner(String),

    #[error("mitigation error: {0}")]
    Mitigation(String),

    /// Refused because the requested simulation would exceed the memory guard.
    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn ensure_same_dim(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left, right })
    }
}
