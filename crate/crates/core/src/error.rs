use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A positioned parse failure. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (size {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("impossible observation {observation} after action {action}: p(o|a,b) = 0")]
    ImpossibleObservation { action: String, observation: usize },
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("invalid model: {0}")]
    InvalidModel(ValidationReport),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("value function has no vectors")]
    EmptyValueFunction,
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("exact backup would enumerate {required} vectors, above the cap of {cap}")]
    EnumerationCap { required: u128, cap: u128 },
    #[error("linear program failed while pruning candidate {candidate}: {message}")]
    Lp { candidate: usize, message: String },
    #[error("value iteration did not converge in {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown fixture '{0}'")]
    UnknownFixture(String),
    #[error("wall-clock limit reached during a stage")]
    Interrupted,
}
