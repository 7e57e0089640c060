use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}:{line}: {msg}", file.display())]
    Parse { file: PathBuf, line: usize, msg: String },
    #[error("{}: {source}", file.display())]
    Read { file: PathBuf, source: std::io::Error },
    #[error("{}: {source}", file.display())]
    Write { file: PathBuf, source: std::io::Error },
    #[error("{}:{line}: descriptor has {found} values, header declares {expected}", file.display())]
    Dimension { file: PathBuf, line: usize, expected: usize, found: usize },
    #[error(transparent)]
    Core(#[from] objguide::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn parse(file: &Path, line: usize, msg: impl Into<String>) -> Self {
        CliError::Parse { file: file.to_path_buf(), line, msg: msg.into() }
    }

    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Read { .. } => 2,
            CliError::Dimension { .. } | CliError::Core(objguide::Error::DimensionMismatch { .. }) => 3,
            CliError::Write { .. } | CliError::Core(_) => 1,
        }
    }
}
