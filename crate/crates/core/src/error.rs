use thiserror::Error;

/// Errors raised by model construction, estimation and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemError {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("model is over-parameterized: df = {0}")]
    NegativeDf(i64),
    #[error("invalid design condition: {0}")]
    InvalidCondition(String),
    #[error("excluded combination: {0}")]
    Excluded(String),
    #[error("bad starting values: {0}")]
    BadStart(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, SemError>;

impl From<std::io::Error> for SemError {
    fn from(e: std::io::Error) -> Self {
        SemError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for SemError {
    fn from(e: serde_json::Error) -> Self {
        SemError::Config(e.to_string())
    }
}

impl From<csv::Error> for SemError {
    fn from(e: csv::Error) -> Self {
        SemError::Io(e.to_string())
    }
}
