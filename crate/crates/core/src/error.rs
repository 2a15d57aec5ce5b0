use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("observable eigenvalue {eigenvalue} is not within tolerance of +1 or -1")]
    InvalidEigenvalue { eigenvalue: f64 },

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("parameter `{name}` out of range: {message}")]
    OutOfRange { name: &'static str, message: String },

    #[error("unreachable fidelity {fidelity} for {model} noise (reachable range [{min}, {max}])")]
    UnreachableFidelity {
        fidelity: f64,
        model: &'static str,
        min: f64,
        max: f64,
    },

    #[error("degenerate ideal distribution for setting {setting}: every outcome is equally likely")]
    DegenerateGame { setting: usize },

    #[error("missing counts for setting {0}")]
    MissingCounts(usize),

    #[error("input too short for {test}: need at least {required} bits, got {actual}")]
    TooShort {
        test: &'static str,
        required: usize,
        actual: usize,
    },

    #[error(
        "certification threshold not met: confidence {confidence} < required {required} (shortfall {shortfall:e})"
    )]
    ThresholdNotMet {
        confidence: f64,
        required: f64,
        shortfall: f64,
    },

    #[error("insufficient points for fit: need {required}, got {actual}")]
    InsufficientPoints { required: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("missing Pauli expectation `{0}`")]
    MissingLabel(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}:{line}: {message}")]
    Log {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn out_of_range(name: &'static str, message: impl Into<String>) -> Self {
        Error::OutOfRange {
            name,
            message: message.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
