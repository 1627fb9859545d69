use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid fractional orders: {0}")]
    InvalidOrders(String),

    #[error("sum-of-exponentials certification failed for beta={beta}: max error {achieved:.3e} > target {target:.3e} after {depth} refinements")]
    SoeCertification {
        beta: f64,
        target: f64,
        achieved: f64,
        depth: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operation requires the fast (sum-of-exponentials) coefficient family")]
    NotFastMode,

    #[error("coefficient table holds steps up to {capacity}, requested {requested}")]
    TableCapacity { capacity: usize, requested: usize },

    #[error("history state used before seeding")]
    HistoryNotSeeded,

    #[error("v-hat sequence incomplete: need {needed} levels, have {have}")]
    IncompleteSequence { needed: usize, have: usize },

    #[error("coefficient validation failed at step {step}: {detail}")]
    Validation { step: usize, detail: String },

    #[error("tridiagonal system is not diagonally dominant at row {row}")]
    NotDiagonallyDominant { row: usize },

    #[error("no exact solution available for error measurement")]
    NoExactSolution,

    #[error("root of sigma equation not bracketed in [{lo}, {hi}]")]
    SigmaBracket { lo: f64, hi: f64 },

    #[error("expression error: {0}")]
    Expression(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
