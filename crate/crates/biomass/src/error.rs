use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("csv row {row}: {msg}")]
    MalformedRow { row: usize, msg: String },

    #[error("sample {image_id}: {constraint}")]
    InvalidLabel { image_id: String, constraint: String },

    #[error("missing image file: {0}")]
    MissingImage(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("imputation: {0}")]
    Imputation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("backward called before forward")]
    NoForwardPass,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("training: {0}")]
    Training(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
