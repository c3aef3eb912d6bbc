//! Error type shared by every module.

use thiserror::Error;

/// Failures raised by grid construction, simulation, detection and localization.
#[derive(Debug, Error)]
pub enum GridwatchError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("duplicate branch {0}-{1}")]
    DuplicateBranch(usize, usize),

    #[error("unknown or out-of-service branch {0}-{1}")]
    UnknownBranch(usize, usize),

    #[error("dead island without voltage reference: buses {0:?}")]
    DeadIsland(Vec<usize>),

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:e})")]
    NotConverged { iterations: usize, mismatch: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("detector already stopped at step {0}")]
    DetectorStopped(usize),

    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl GridwatchError {
    /// Process exit code: 2 for bad input, 3 for numerical failure.
    #[must_use]
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::NotConverged { .. } | Self::Singular(_) | Self::NotPositiveDefinite(_) | Self::DeadIsland(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, GridwatchError>;
