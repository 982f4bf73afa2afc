use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A malformed data row; `row` is the line number in the file.
    #[error("{}: row {row}: {msg}", path.display())]
    Parse { path: PathBuf, row: u64, msg: String },
    #[error("{}: line {line}: {msg}", path.display())]
    Config { path: PathBuf, line: usize, msg: String },
    #[error("option {key}: {msg}")]
    Option { key: String, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Model(#[from] gpssm_core::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub(crate) fn option(key: &str, msg: impl Into<String>) -> Self {
        CliError::Option {
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        CliError::Csv {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(path: &Path, row: u64, msg: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            row,
            msg: msg.into(),
        }
    }
}
