use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("threshold {name} = {value} outside [{lo}, {hi}]")]
    ThresholdOutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("degenerate domain: {0}")]
    EmptyDomain(&'static str),

    #[error("box ({x0},{y0})-({x1},{y1}) does not fit a {width}x{height} canvas")]
    BoxOutOfFrame {
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        width: usize,
        height: usize,
    },

    #[error("sample too small: {what} needs at least {needed} points, got {got}")]
    SampleTooSmall {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("sample sets have different feature dimensions ({0} vs {1})")]
    FeatureDimension(usize, usize),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("invalid bench spec: {0}")]
    InvalidBench(String),

    #[error("segmentor has no map for image {image_id:?} and prompt {prompt:?}")]
    UnknownMap { image_id: String, prompt: String },

    /// The message already includes the inner error, so it is not exposed
    /// as a source (reporters would print it twice).
    #[error("{context}: {inner}")]
    Context { context: String, inner: Box<Error> },

    #[error("malformed SGRID file: {0}")]
    Format(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Like `Context`, the message carries the cause itself.
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            inner: Box::new(self),
        }
    }
}
