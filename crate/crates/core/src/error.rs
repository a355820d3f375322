use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the feature-selection toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed input file. `row` and `column` are 1-based; `column` is 0
    /// when the problem concerns the whole line.
    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("linear solve residual {residual:e} exceeds {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("objective increased at iteration {iteration}: {previous} -> {current}")]
    NonMonotone {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("no evaluable instances")]
    NoEvaluableInstances,
}

impl Error {
    /// True for failures raised by the numerical solver rather than by input
    /// validation or I/O.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NotPositiveDefinite { .. }
                | Error::Residual { .. }
                | Error::NonMonotone { .. }
        )
    }

    /// True for failures to read or parse an input file.
    pub fn is_input_failure(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Parse { .. } | Error::InvalidDataset(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
