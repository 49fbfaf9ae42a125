use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed FFL {text:?}: {reason}")]
    Parse { text: String, reason: String },

    #[error("unknown term {0:?}")]
    UnknownTerm(String),

    #[error("invalid lexicon: {0}")]
    Lexicon(String),

    #[error("invalid bounding box [{x}, {y}, {w}, {h}]")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },

    #[error("schema violation in {context}: {reason}")]
    Schema { context: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("training diverged at epoch {epoch}, step {step}: supcon={supcon}, reg={reg}")]
    Divergence { epoch: usize, step: usize, supcon: f64, reg: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("png: {0}")]
    Png(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn schema(context: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema { context: context.into(), reason: reason.into() }
    }
}
