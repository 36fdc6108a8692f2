use std::path::Path;
use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Validation(_) => ExitCode::from(2),
            CliError::Degenerate(_) => ExitCode::from(3),
            CliError::Io(_) => ExitCode::from(4),
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

impl From<ttkoop::Error> for CliError {
    fn from(err: ttkoop::Error) -> Self {
        use ttkoop::Error as E;
        match err {
            E::Degenerate(_) | E::Singular(_) | E::Integration(_) | E::Backend(_) => {
                CliError::Degenerate(err.to_string())
            }
            _ => CliError::Validation(err.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
