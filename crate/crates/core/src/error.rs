use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the engine.
///
/// The variants line up with the process exit codes used by the command-line
/// front end (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// Bad argument or configuration value.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Input file is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// Input is well-formed but uses a feature this engine does not support.
    #[error("unsupported: {0}")]
    Capability(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// An external command failed.
    #[error("execution failed: {0}")]
    Execution(String),

    /// An internal invariant was violated.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 argument/config, 3 data/format, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) => 2,
            Error::Format(_) | Error::Capability(_) | Error::Io { .. } | Error::Execution(_) => 3,
            Error::Internal(_) => 4,
        }
    }
}
