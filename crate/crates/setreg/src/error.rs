//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the registration pipeline.
#[derive(Debug, Error)]
pub enum SetRegError {
    /// A raster violated a structural invariant (size, finiteness, ...).
    #[error("invalid image: {0}")]
    InvalidImage(String),

    /// Two rasters that must share dimensions do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Input raster has a channel layout or bit depth we do not ingest.
    #[error("unsupported raster format: {0}")]
    UnsupportedFormat(String),

    /// A configuration value is out of its legal range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Caller-supplied data violated an operation precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The optimizer was asked to score an edge it has no table for.
    #[error("missing correlation table for edge ({0}, {1})")]
    MissingTable(usize, usize),

    /// Filesystem failure, tagged with the offending path.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file was read but its contents could not be understood.
    #[error("{}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, SetRegError>;

impl SetRegError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SetRegError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        SetRegError::Malformed {
            path: path.into(),
            message: message.into(),
        }
    }
}
