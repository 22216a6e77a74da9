use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("bad magic bytes in point cloud file (expected PCLD)")]
    BadMagic,

    #[error("truncated payload: header declares {expected} points but {available} bytes of coordinates follow")]
    Truncated { expected: usize, available: usize },

    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },

    #[error("degenerate mesh: total surface area is zero")]
    DegenerateMesh,

    #[error("unknown shape kind `{0}`")]
    UnknownShape(String),

    #[error("{what} out of range: {value} not in [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("zero-norm input to {0}")]
    ZeroNorm(&'static str),

    #[error("class {0} has no initialized prototype")]
    UninitializedPrototype(usize),

    #[error("missing score statistic: {0}")]
    MissingStatistic(String),

    #[error("non-finite loss `{name}` at state {state}, epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        name: &'static str,
        state: usize,
        epoch: usize,
        batch: usize,
    },

    #[error("incompatible checkpoint: {0}")]
    Checkpoint(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("{0}")]
    Metric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
