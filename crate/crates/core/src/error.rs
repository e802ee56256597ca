use std::path::PathBuf;

use thiserror::Error;

/// Every failure the engine can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input too short: {0}")]
    EmptyInput(String),

    #[error("sample rate mismatch: audio is {audio_hz} Hz but the configuration expects {config_hz} Hz")]
    RateMismatch { audio_hz: u32, config_hz: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {layer}: expected {expected}, got {actual}")]
    Shape {
        layer: String,
        expected: String,
        actual: String,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("truncated data while reading {0}")]
    Truncated(String),

    #[error("truncated tensor payload for {0:?}")]
    TruncatedTensor(String),

    #[error("weight store incomplete: {0}")]
    MissingTensor(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("index {index} out of range (length {len})")]
    Index { index: usize, len: usize },

    #[error("vector dimensions differ: {0} vs {1}")]
    Dimension(usize, usize),

    #[error("alignment has no events")]
    EmptyAlignment,

    #[error("count mismatch: {detected} detected times vs {truth} ground-truth times")]
    Count { detected: usize, truth: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("causality violation: frame {touched} used after only {available} frames arrived")]
    Causality { touched: usize, available: usize },

    #[error("invalid warp spec: {0}")]
    Spec(String),

    #[error("unsupported audio: {0}")]
    Audio(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(
        layer: impl Into<String>,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::Shape {
            layer: layer.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
