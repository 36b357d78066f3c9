use alloc::boxed::Box;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not symmetric or not finite (asymmetry {asymmetry:e})")]
    InvalidMatrix { asymmetry: f64 },
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(&'static str),
    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid filter specification: {0}")]
    InvalidFilterSpec(&'static str),
    #[error("at least two channels are required, found {0}")]
    InsufficientChannels(usize),
    #[error("window [{start}, {end}] s lies outside the epoch")]
    InvalidWindow { start: f64, end: f64 },
    #[error("sampling rate {from} Hz cannot be reduced to {to} Hz by an integer factor")]
    InvalidResampleFactor { from: f64, to: f64 },
    #[error("training set must contain both classes")]
    DegenerateTrainingSet,
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
    #[error("cross-validation results were produced under different fold plans")]
    PlanMismatch,
    #[error("repeat {repeat}, fold {fold}: {source}")]
    Fold {
        repeat: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
