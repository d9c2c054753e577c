use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the command-line runner to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("matrix is not symmetric positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed header {line:?} (expected `rows,cols`)")]
    MalformedHeader { path: PathBuf, line: String },

    #[error("{path}: header declares {expected} values but {found} were found")]
    CountMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: cannot parse {token:?} as a number")]
    Unparsable {
        path: PathBuf,
        line: usize,
        token: String,
    },

    #[error("{path}:{line}: value {token:?} is out of the finite double range")]
    Overflow {
        path: PathBuf,
        line: usize,
        token: String,
    },
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl Into<String>,
        got: impl Into<String>,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DimensionMismatch { .. } | Error::InvalidArgument(_) => ErrorClass::Validation,
            Error::NumericalFailure(_) | Error::NotPositiveDefinite { .. } => ErrorClass::Numerical,
            Error::Io { .. }
            | Error::MalformedHeader { .. }
            | Error::CountMismatch { .. }
            | Error::Unparsable { .. }
            | Error::Overflow { .. } => ErrorClass::Io,
        }
    }
}
