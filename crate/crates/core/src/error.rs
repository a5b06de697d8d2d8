use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the inpainting stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("spectrogram kind mismatch: expected {expected}, found {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("invalid mask: {0}")]
    Mask(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("unsupported layer kind for {op}: {kind}")]
    UnsupportedLayer { op: &'static str, kind: String },
    #[error("malformed data: {0}")]
    Data(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
