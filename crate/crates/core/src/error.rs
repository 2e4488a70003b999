use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("maxval {0} exceeds 255")]
    MaxvalTooLarge(u32),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("region out of bounds: {0}")]
    OutOfBounds(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("template too flat: std dev {std:.3} below threshold {threshold:.3}")]
    TemplateTooFlat { std: f64, threshold: f64 },
    #[error("no candidates to match")]
    NoCandidates,
    #[error("no qualifying template after {0} retries")]
    RetriesExhausted(usize),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
