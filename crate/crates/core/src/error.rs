use thiserror::Error;

/// Errors raised by the library. Variants carry enough context to render a
/// useful diagnostic from the CLI without further lookups.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EsfError {
    #[error("invalid Young diagram: {0}")]
    InvalidDiagram(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected} classes, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class label {label} out of range for k = {k}")]
    LabelOutOfRange { label: usize, k: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no downward transition from a multiple partition of size 0")]
    NoTransition,

    #[error("exact rational parameters required for {0}")]
    ExactRequired(&'static str),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("invalid group table: {0}")]
    InvalidGroup(String),
}

pub type Result<T> = std::result::Result<T, EsfError>;
