use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error)]
pub enum DlabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("invalid exponent {0}")]
    InvalidExponent(f64),
    #[error("band not resolved on this grid: {0}")]
    BandUnresolved(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parameter constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("empty interval: {0}")]
    EmptyInterval(String),
    #[error("too few samples: {0}")]
    InsufficientSamples(String),
    #[error("fit range not populated: {0}")]
    FitRange(String),
    #[error("inconsistent trajectory: {0}")]
    InconsistentTrajectory(String),
    #[error("Picard iteration is not contracting: {0}")]
    NoContraction(String),
    #[error("solution blew up at t = {time}: {reason}")]
    BlowupDetected { time: f64, reason: String },
    #[error("unsupported snapshot: {0}")]
    SnapshotFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DlabError>;
