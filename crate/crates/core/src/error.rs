use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("points hold {points} coordinates but {weights} weights were given for dimension {dim}")]
    LengthMismatch {
        points: usize,
        weights: usize,
        dim: usize,
    },

    #[error("weight {value} at index {index} is negative or not finite")]
    NegativeWeight { index: usize, value: f64 },

    #[error("intrinsic dimension {n} must satisfy 1 <= n <= ambient dimension {d}")]
    DimensionOrder { n: usize, d: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate is NaN or infinite (point {index})")]
    NanCoordinate { index: usize },

    #[error("radius {0} is invalid (must be finite and in range)")]
    InvalidRadius(f64),

    #[error("insufficient resolution: r_min = {r_min:.6e} (10 * safety * h with h = {h:.6e}) is not below r_max = {r_max:.6e}")]
    InsufficientResolution { h: f64, r_min: f64, r_max: f64 },

    #[error("{0}")]
    Validation(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by the caller's inputs rather than the
    /// environment or the data's resolution.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::InsufficientResolution { .. } | Error::Io { .. } | Error::Resource(_)
        )
    }

    pub fn is_resolution(&self) -> bool {
        matches!(self, Error::InsufficientResolution { .. })
    }
}
