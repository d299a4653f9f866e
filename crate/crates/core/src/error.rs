use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}D, got {actual}D")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("kernel is singular at coincident points x = y")]
    CoincidentPoints,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid with N = {n} exceeds the direct-sum limit N <= {limit}")]
    GridTooLarge { n: usize, limit: usize },

    #[error("non-finite value in the field at t = {t}")]
    NonFinite { t: f64 },

    #[error("Picard iteration diverged at iterate {iterate}: norm {norm:.3e} exceeds 10x the initial norm")]
    ContractionFailure { iterate: usize, norm: f64 },

    #[error("history is missing required entries: {0}")]
    MissingHistory(String),

    #[error("states are not consecutive on a uniform time grid: {0}")]
    NonUniformStates(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
