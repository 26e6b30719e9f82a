use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("directory not found: {0}")]
    MissingDirectory(PathBuf),

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: unsupported bit depth ({detail})")]
    UnsupportedBitDepth { path: PathBuf, detail: String },

    #[error("frame {index} is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    InconsistentDimensions {
        index: usize,
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },

    #[error("need at least 2 frames, found {0}")]
    TooFewFrames(usize),

    #[error("insufficient motion: only {kept} of {total} frames survive motionless-frame removal")]
    InsufficientMotion { kept: usize, total: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("vertex {0} has zero degree")]
    IsolatedVertex(usize),

    #[error("cosine similarity of a zero-norm input is undefined")]
    ZeroNorm,

    #[error("singular value decomposition failed: {0}")]
    Svd(String),

    #[error("non-finite iterate: {0}")]
    NonFinite(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
