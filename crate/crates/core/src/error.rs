use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("out-of-bag score is undefined for a forest fitted without bootstrap")]
    OobUndefined,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Numerical(_) => 4,
            Error::Dimension(_)
            | Error::Parameter(_)
            | Error::Empty(_)
            | Error::Config(_)
            | Error::Schema(_)
            | Error::Parse { .. }
            | Error::OobUndefined => 3,
        }
    }
}
