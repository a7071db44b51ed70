//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by dataset ingestion, linear algebra, and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing input file {path}")]
    MissingFile { path: PathBuf },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix dimension {dim} exceeds eigendecomposition oracle cap {cap}")]
    OracleCapacity { dim: usize, cap: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("zero signal has no spectral energy distribution")]
    DegenerateSignal,

    #[error("non-finite gradient for parameter {param}")]
    NanGradient { param: String },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
