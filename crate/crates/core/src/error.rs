use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the range-view pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pixel ({u}, {v}) is outside the {width}x{height} image")]
    PixelOutOfBounds {
        u: i64,
        v: i64,
        width: usize,
        height: usize,
    },

    #[error("truncated record at byte offset {offset} (record size {record_size} bytes)")]
    Truncated { offset: usize, record_size: usize },

    #[error("non-finite value in record {record}")]
    NonFinite { record: usize },

    #[error("count mismatch: expected {expected} entries, found {found}")]
    CountMismatch { expected: usize, found: usize },

    #[error("unknown label ids {ids:?}")]
    UnknownLabel { ids: Vec<u32> },

    #[error("invalid class schema: {0}")]
    Schema(String),

    #[error("dimension mismatch: {left:?} vs {right:?} (width, height)")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("pixel {pixel}: class probabilities sum to {sum}")]
    NotNormalized { pixel: usize, sum: f64 },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Attaches the offending file to an error.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Error {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
