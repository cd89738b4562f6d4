use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("enumeration refused: {units} free units exceeds the limit of {limit}")]
    GuardExceeded { units: usize, limit: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error in {source_name}: {message}")]
    Parse { source_name: String, message: String },

    #[error("idx parse error in {source_name}: {kind}")]
    Idx { source_name: String, kind: IdxError },

    #[error("invalid container: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum IdxError {
    #[error("bad magic 0x{0:08x}")]
    BadMagic(u32),
    #[error("truncated: need {expected} bytes, file has {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("size mismatch: header declares {expected} bytes, file has {actual}")]
    SizeMismatch { expected: usize, actual: usize },
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Contract(_) => "contract",
            Error::Usage(_) => "usage",
            Error::Unsupported(_) => "unsupported",
            Error::GuardExceeded { .. } => "guard",
            Error::Numerical(_) => "numerical",
            Error::Parse { .. } => "parse",
            Error::Idx { .. } => "parse",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
        }
    }
}
