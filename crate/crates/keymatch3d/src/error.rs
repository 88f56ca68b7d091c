use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on operation inputs was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// Bad configuration (unknown keys, out-of-range values, impossible setups).
    #[error("configuration error: {0}")]
    Config(String),

    /// A file did not match its declared binary or text format.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    /// I/O failure, annotated with the file involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code per the CLI contract: 1 for usage/config problems,
    /// 2 for data and domain problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
