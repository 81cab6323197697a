//! Crate-wide error type.
//!
//! Every fallible public operation returns [`Error`]. The [`ErrorKind`]
//! accessor groups variants into the coarse classes the CLI maps to exit
//! codes: configuration problems (2), numeric failures (3), I/O and file
//! format problems (4).

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition (range, bound, size).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An input value or shape is invalid for the operation.
    #[error("input error: {0}")]
    Input(String),

    /// The API was used in an unsupported way (e.g. a tensor id from a
    /// different tape, sampling the null concept).
    #[error("usage error: {0}")]
    Usage(String),

    /// A lookup failed.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// A computation produced a non-finite value.
    #[error("numeric error at step {step}: {message}")]
    Numeric { step: usize, message: String },

    /// Training diverged.
    #[error("training error at step {step}: {message}")]
    Training { step: usize, message: String },

    /// Sampling produced a non-finite state.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// A configuration file failed to parse or validate.
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    /// A run could not be assembled from its configuration.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// A persisted file is corrupt or truncated.
    #[error("format error at offset {offset} in {path}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error class, used for CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numeric,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parameter(_)
            | Error::Input(_)
            | Error::Usage(_)
            | Error::Lookup(_)
            | Error::Config { .. }
            | Error::Configuration(_) => ErrorKind::Config,
            Error::Numeric { .. } | Error::Training { .. } | Error::Sampling(_) => {
                ErrorKind::Numeric
            }
            Error::Format { .. } | Error::Io { .. } => ErrorKind::Io,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
