use std::path::PathBuf;

use subcol_core::{Error as CoreError, ErrorClass};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
/// A verification check reported failure.
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0} verification check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io { .. } => EXIT_IO,
            CliError::ChecksFailed(_) => EXIT_CHECK_FAILED,
            CliError::Core(e) => match e.class() {
                ErrorClass::Validation => EXIT_VALIDATION,
                ErrorClass::Numerical => EXIT_NUMERICAL,
                ErrorClass::Io => EXIT_IO,
            },
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
