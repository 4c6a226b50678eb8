use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// Numerical failures carry the diagnostics needed to decide whether the
/// input or the solver settings are at fault.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Input data is malformed (non-finite entries, asymmetric matrices, shape mismatch).
    #[error("input error: {0}")]
    Input(String),

    /// A quantity required by the requested computation is missing.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Bisection or bracketing did not reach tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { residual: f64, iterations: usize },

    /// A monotone equation has no root in the admissible range.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// A closed-form expression is evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
