use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in field")]
    NonFinite,

    /// The Duhamel map did not settle within the iteration cap.
    #[error("contraction failure after {iterations} iterations (last difference {last_difference:e})")]
    ContractionFailure {
        iterations: usize,
        last_difference: f64,
    },

    #[error("positivity violation at t = {t}: min u = {min:e}")]
    PositivityViolation { t: f64, min: f64 },

    #[error("solver diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("series too short: {0}")]
    SeriesTooShort(String),

    #[error("nonpositive value {value:e} at t = {t} inside fit window")]
    NonPositiveWindow { t: f64, value: f64 },
}
