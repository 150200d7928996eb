use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the sampling, estimation and fitting routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid distribution spec: {0}")]
    InvalidSpec(String),

    #[error("singular covariance: {} eigenvalue(s) below {floor:e}, deficient directions {directions:?}", .eigenvalues.len())]
    SingularCovariance {
        floor: f64,
        eigenvalues: Vec<f64>,
        directions: Vec<Vec<f64>>,
    },

    #[error("envelope is empty: {0}")]
    EmptyEnvelope(String),

    #[error("search space of {size} functions exceeds the guard of {limit}")]
    SearchSpaceTooLarge { size: u64, limit: u64 },

    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed sample file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
