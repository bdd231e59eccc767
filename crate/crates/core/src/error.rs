use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric input violated its domain (non-finite, wrong sign, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A CSV or config file did not match its documented schema.
    #[error("schema error in {path}: {message}")]
    Schema { path: String, message: String },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("invalid information quality: {0}")]
    InvalidQuality(String),

    #[error("confidence interval undefined: {0}")]
    UndefinedCi(String),

    /// Training produced a non-finite loss or Q-value.
    #[error("numerical divergence: {message}")]
    Divergence {
        message: String,
        checkpoint: Option<PathBuf>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Divergence { .. } => 4,
            Error::DegenerateFit(_) | Error::Domain(_) => 4,
            _ => 2,
        }
    }
}
