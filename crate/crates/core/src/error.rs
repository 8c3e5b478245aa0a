use alloc::string::String;
use core::fmt;

/// Errors produced by the decoder toolkit.
#[derive(Debug, Clone, PartialEq)]
pub enum UmmError {
    /// Symbol index outside the symbol set.
    SymbolUnknown { symbol: usize, n_symbols: usize },
    /// A hypothesis partition with an empty target or non-target side.
    DegeneratePartition { symbol: usize },
    /// Argument outside the domain of an operation.
    ArgumentOutOfRange(&'static str),
    /// Covariance requested from an empty epoch pool.
    EmptyPool,
    /// Not enough epochs for the requested estimator.
    InsufficientData { needed: usize, got: usize },
    /// Vector or matrix dimensions do not agree.
    ShapeMismatch { expected: usize, got: usize },
    /// Matrix could not be factorized as symmetric positive-definite.
    NotPositiveDefinite,
    /// Fewer than two hypotheses to compare.
    TooFewSymbols,
    /// LDA extraction before any trial has been accumulated.
    NoAccumulatedMeans,
    /// A trial does not match the dimensions of the session so far.
    InconsistentDimensions { expected: usize, got: usize },
    /// Non-finite value in epoch data.
    NonFinite,
    /// Rejected configuration.
    InvalidConfig(String),
    /// Malformed trial (events misaligned, empty highlight sets, ...).
    InvalidTrial(String),
}

impl fmt::Display for UmmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UmmError::SymbolUnknown { symbol, n_symbols } => {
                write!(f, "symbol index {symbol} outside symbol set of size {n_symbols}")
            }
            UmmError::DegeneratePartition { symbol } => write!(
                f,
                "symbol {symbol} is highlighted in all or none of the trial's events"
            ),
            UmmError::ArgumentOutOfRange(what) => write!(f, "argument out of range: {what}"),
            UmmError::EmptyPool => write!(f, "epoch pool is empty"),
            UmmError::InsufficientData { needed, got } => {
                write!(f, "need at least {needed} epochs, got {got}")
            }
            UmmError::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            UmmError::NotPositiveDefinite => write!(f, "matrix is not positive definite"),
            UmmError::TooFewSymbols => write!(f, "at least two symbols are required"),
            UmmError::NoAccumulatedMeans => write!(f, "no class means accumulated yet"),
            UmmError::InconsistentDimensions { expected, got } => write!(
                f,
                "trial feature dimension {got} differs from session dimension {expected}"
            ),
            UmmError::NonFinite => write!(f, "non-finite value in epoch data"),
            UmmError::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            UmmError::InvalidTrial(msg) => write!(f, "invalid trial: {msg}"),
        }
    }
}

impl core::error::Error for UmmError {}

pub type Result<T, E = UmmError> = core::result::Result<T, E>;
