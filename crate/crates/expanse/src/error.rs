use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path} at byte {offset}: {message}")]
    IdxFormat {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path} at byte {offset}: {message}")]
    Checkpoint {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("dataset mismatch: {0}")]
    DatasetMismatch(String),

    #[error("selection produced no samples: {0}")]
    EmptySelection(String),

    #[error("class {class} has only {available} samples, need {requested}")]
    ClassUnderflow {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid expansion plan: {0}")]
    InvalidPlan(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage {index} ({name}) failed: {source}")]
    Stage {
        index: usize,
        name: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
