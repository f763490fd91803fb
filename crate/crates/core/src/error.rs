use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("effectivity undefined: exact error is zero")]
    UndefinedEffectivity,
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
