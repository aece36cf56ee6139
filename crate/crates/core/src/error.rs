use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty calibration set")]
    EmptyCalibration,

    #[error("{context}: non-finite value {value} at index {index}")]
    NonFinite {
        context: &'static str,
        index: usize,
        value: f64,
    },

    #[error("invalid parameter {name}={value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        reason: &'static str,
    },

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("degenerate group split: n1={n1}, n2={n2} (need both nonempty and n1+n2 >= 3)")]
    DegenerateSplit { n1: usize, n2: usize },

    #[error("negative raw weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("p-value {value} outside (0, 1]")]
    PValueOutOfRange { value: f64 },

    #[error("dimension mismatch: model expects {expected}, point {index} has {got}")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        index: usize,
    },

    #[error("insufficient training data: need {needed}, got {got} ({what})")]
    InsufficientTraining {
        needed: usize,
        got: usize,
        what: &'static str,
    },

    #[error("insufficient data: need {needed} {what}, only {available} available")]
    InsufficientData {
        needed: usize,
        available: usize,
        what: &'static str,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
