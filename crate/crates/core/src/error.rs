use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("mass left the grid window: {leaked:.3e} of {total:.3e}")]
    Window { leaked: f64, total: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty measure cannot be normalized")]
    EmptyMeasure,

    #[error("barrier cascade did not reach tolerance {tol}: gap {gap:.4e} at delta {delta:.3e}")]
    Convergence { tol: f64, gap: f64, delta: f64 },

    #[error("no cell exceeds threshold {0:e}")]
    BelowThreshold(f64),

    #[error("time grid mismatch: {0}")]
    TimeGrid(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
