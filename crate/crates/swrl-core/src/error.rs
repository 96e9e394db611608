//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix argument does not match the expected dimension.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A configuration field is missing, out of range, or inconsistent.
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    /// Geometry that leaves a required frame or direction undefined.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// NaN or infinity reached a path that must stay finite (simulation
    /// integrity); treated as a hard fault.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// An operation was called in a state that does not permit it.
    #[error("usage error: {0}")]
    Usage(String),

    /// Checkpoint or dataset shapes do not match the configured model.
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    /// Training diverged (non-finite loss or parameters).
    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
