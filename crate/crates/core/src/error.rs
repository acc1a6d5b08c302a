use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the supported numeric domain (e.g. n >= 2^63).
    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Index does not fit the M*N*O encoding volume.
    #[error("encoding capacity exceeded: index {index} >= capacity {capacity}")]
    Capacity { index: u64, capacity: u64 },

    #[error("label bitmap [{lo}, {hi}) does not cover integer {value}")]
    Coverage { lo: u64, hi: u64, value: u64 },

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A NaN or infinity appeared in a forward value or the loss.
    #[error("non-finite value produced by {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
