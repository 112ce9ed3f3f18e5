use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised while decoding a single `.npy` payload.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum NpyError {
    #[error("missing \\x93NUMPY magic")]
    BadMagic,
    #[error("unsupported npy format version {major}.{minor}")]
    UnsupportedVersion { major: u8, minor: u8 },
    #[error("malformed npy header: {0}")]
    BadHeader(String),
    #[error("unsupported dtype descriptor {0:?}")]
    UnsupportedDtype(String),
    #[error("fortran-ordered arrays are not supported")]
    UnsupportedLayout,
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {detail}")]
    Shape { context: &'static str, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("class index {index} out of range for {num_classes} classes")]
    ClassOutOfRange { index: usize, num_classes: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("npy: {0}")]
    Npy(#[from] NpyError),

    #[error("archive {path}: {detail}")]
    Archive { path: PathBuf, detail: String },

    #[error("archive {path} is missing entry {key}")]
    MissingKey { path: PathBuf, key: String },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}:{line}: {detail}")]
    Parse { path: PathBuf, line: u64, detail: String },

    #[error("class {0} has too few samples")]
    ClassAbsent(usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { context, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
