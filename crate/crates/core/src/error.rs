use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("adjacency matrix is not square: {0} x {1}")]
    NotSquare(usize, usize),

    #[error("adjacency matrix is not symmetric at ({0}, {1})")]
    NonSymmetric(usize, usize),

    #[error("adjacency entries must be 0/1 with a zero diagonal; bad entry at ({0}, {1})")]
    BadEntries(usize, usize),

    #[error("graph is disconnected (algebraic connectivity {0:e})")]
    Disconnected(f64),

    #[error("a consensus graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),

    #[error("invalid switching schedule: {0}")]
    Schedule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("regressor not persistently exciting: {0}")]
    NotPersistentlyExciting(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation diverged at t = {t}: {signal} = {value:e}")]
    Diverged { t: f64, signal: String, value: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
