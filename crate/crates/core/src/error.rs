//! Error type shared by every module of the toolkit.

use std::path::PathBuf;

/// Errors raised by the toolkit.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {path}")]
    UnsupportedFormat { path: PathBuf },

    #[error("corrupt image file {path}: {detail}")]
    CorruptImage { path: PathBuf, detail: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("duplicate dataset id: {0}")]
    DuplicateId(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("training diverged: loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("image geometry unsuitable for watermarking: {0}")]
    Geometry(String),

    #[error("unknown class label: {0}")]
    UnknownLabel(String),

    #[error("training data contains fewer than two classes")]
    SingleClass,

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u16),

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("eigensolver failed to converge after {sweeps} sweeps (off-diagonal norm {off_norm:.3e})")]
    EigenNonConvergence { sweeps: usize, off_norm: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
