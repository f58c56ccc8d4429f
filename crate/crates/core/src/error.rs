use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("grid is {width}x{height}, need at least {min}x{min}")]
    GridTooSmall { width: usize, height: usize, min: usize },

    #[error("pyramid of {levels} levels would shrink below {min}x{min} (input {width}x{height})")]
    TooManyLevels {
        levels: usize,
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("traces have different lengths ({0} vs {1})")]
    TraceLengthMismatch(usize, usize),

    #[error("trace never converged after contact")]
    NotConverged,

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("{}: {err}", path.display())]
    Io { path: PathBuf, err: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            err,
        }
    }
}
