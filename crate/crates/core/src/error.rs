use thiserror::Error;

/// Errors produced by the localization library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("box outside frame: {0}")]
    BoxOutsideFrame(String),

    #[error("box too large for any crop window: {0}")]
    BoxTooLarge(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("batch mixes size classes: {0}")]
    MixedBatch(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{path}:{line}: {msg}")]
    Annotation {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("image {path}: {msg}")]
    Image { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
