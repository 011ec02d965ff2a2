use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    BadFlag(String),
    #[error("missing input {}: {hint}", path.display())]
    MissingInput { path: PathBuf, hint: String },
    #[error(transparent)]
    Core(#[from] salbias_core::Error),
    #[error(transparent)]
    Study(#[from] salbias_study::StudyError),
    #[error("server: {0}")]
    Server(#[from] std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::BadFlag(_) => "BadFlag",
            CliError::MissingInput { .. } => "MissingInput",
            CliError::Core(e) => e.kind(),
            CliError::Study(e) => e.kind(),
            CliError::Server(_) => "ServerError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadFlag(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
