use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("peak at index {index} lies within {margin} samples of the search window edge")]
    PeakAtEdge { index: usize, margin: usize },

    #[error("degenerate peak: all window values are equal")]
    DegeneratePeak,

    #[error("ill-conditioned least-squares problem: {0}")]
    Conditioning(String),

    #[error("measurement failed: {0}")]
    Measurement(String),

    #[error("trace file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
