//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("covariance factorization failed (last jitter tried: {jitter:.3e})")]
    FactorizationFailed { jitter: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("non-informative output: fragility curves carry no variance")]
    NonInformativeOutput,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for input problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Parse { .. } | Error::Io(_) | Error::Json(_) => 2,
            Error::DimensionMismatch { .. }
            | Error::FactorizationFailed { .. }
            | Error::DegenerateData(_)
            | Error::FitFailed(_)
            | Error::NonInformativeOutput
            | Error::GridMismatch(_)
            | Error::EmptySample(_) => 3,
        }
    }
}
