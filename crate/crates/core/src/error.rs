//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A symmetric matrix could not be factorized even after the jitter
    /// ladder was exhausted.
    #[error("matrix of order {order} is not positive definite (max jitter tried: {max_jitter:e})")]
    NotPositiveDefinite { order: usize, max_jitter: f64 },

    #[error("dimension mismatch: expected {expected}, got {got} in {context}")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A sampling design asked for more units than the population holds.
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A spatial profile was requested for a true model whose covariance is
    /// not a function of lag alone.
    #[error("true model is not stationary; lag-based profile unavailable")]
    NonStationaryTrueModel,

    #[error("too few predictive samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("unsupported kernel for this operation: {0}")]
    UnsupportedKernel(String),

    #[error("missing-data block out of grid bounds: {0}")]
    BlockOutOfBounds(String),

    /// A support point of the range grid produced an unfactorable
    /// correlation matrix.
    #[error("correlation matrix at phi = {phi} is not positive definite")]
    PhiGridFailure {
        phi: f64,
        #[source]
        source: Box<Error>,
    },

    /// Numerical failure inside the composite sampler, tagged with the
    /// iteration at which it occurred.
    #[error("numerical failure at composite iteration {iteration}, scan {scan}: {source}")]
    SamplerFailure {
        iteration: usize,
        scan: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
