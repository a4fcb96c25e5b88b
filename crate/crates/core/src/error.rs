use std::io;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("trajectory too short: {frames} frames, need more than {required}")]
    TrajectoryTooShort { frames: usize, required: usize },

    #[error("stale activation cache (cache version {cache}, params version {params})")]
    StaleCache { cache: u64, params: u64 },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("metric `{metric}` cannot be applied to {representation}")]
    MetricMismatch {
        metric: &'static str,
        representation: &'static str,
    },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Format(format!("csv: {other:?}")),
        }
    }
}

impl Error {
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
