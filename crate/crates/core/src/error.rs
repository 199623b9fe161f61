use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of a device law or operation.
    #[error("domain error: {what} = {value} violates {bound}")]
    Domain {
        what: &'static str,
        value: f64,
        bound: String,
    },

    #[error("range error: {0}")]
    Range(String),

    #[error("degenerate map: {0}")]
    DegenerateMap(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("trace is stale: it was produced by a different model revision")]
    StaleTrace,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("checksum mismatch for {path}: expected {expected}, got {actual}")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("network error fetching {url}: {msg}")]
    Network { url: String, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, bound: impl Into<String>) -> Self {
        Error::Domain {
            what,
            value,
            bound: bound.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Network failures are the only errors worth retrying.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Network { .. })
    }

    /// Process exit code used by the CLI: 2 for data problems, 3 for numerical
    /// failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Format { .. }
            | Error::Checksum { .. }
            | Error::Network { .. }
            | Error::Io { .. }
            | Error::EmptyDataset => 2,
            Error::Numerical(_) => 3,
            _ => 1,
        }
    }
}
