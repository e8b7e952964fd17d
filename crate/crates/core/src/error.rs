//! Crate-wide error type and the CLI exit-code contract.

use thiserror::Error;

/// Errors surfaced by the library and mapped onto CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the mathematical domain of an operation
    /// (non-positive variance, malformed mixture weights, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The caller combined arguments incorrectly (dimension mismatch,
    /// negative threshold, bad flag value).
    #[error("usage error: {0}")]
    Usage(String),

    /// A file did not parse under its declared format.
    #[error("format error: {0}")]
    Format(String),

    /// Data parsed but violates snapshot invariants. The message lists
    /// each violation with its row and column.
    #[error("validation error: {0}")]
    Validation(String),

    /// Quadrature failed to reach the requested tolerance.
    #[error("numeric error: quadrature achieved {achieved:e}, requested {requested:e}")]
    Numeric { achieved: f64, requested: f64 },

    /// The trainer produced a non-finite objective.
    #[error("training error: non-finite objective at step {step}")]
    Training { step: usize },

    /// An evaluation experiment could not be scored (e.g. a class with
    /// no training samples).
    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code for the CLI: 1 usage, 2 data/validation, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Domain(_)
            | Error::Format(_)
            | Error::Validation(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::Numeric { .. } | Error::Training { .. } | Error::Evaluation(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
