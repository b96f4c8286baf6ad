//! Error type shared by the whole crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The prior covariance is not positive definite within tolerance.
    #[error("prior covariance is not positive definite (min eigenvalue {min_eig:e} vs max {max_eig:e})")]
    PriorNotPd { min_eig: f64, max_eig: f64 },

    /// A dense symmetric solve failed. Cannot occur for lambda > 0 but is
    /// reported defensively.
    #[error("symmetric linear solve failed: {0}")]
    SolveFailure(String),

    /// Shapes of two arguments do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An operation that needs a nonzero lasso point received x = 0.
    #[error("zero primal point: the mapping to a design is undefined at x = 0")]
    ZeroPrimalPoint,

    /// A design vector violated its invariants beyond repair.
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    /// A screening certificate carried a negative suboptimality bound.
    #[error("invalid certificate: eps = {0} is negative")]
    InvalidCertificate(f64),

    /// Instance too large for a brute-force oracle.
    #[error("instance too large for the oracle: {0}")]
    TooLargeForOracle(String),

    /// The c-case was required (homotopy works on r = 1 only).
    #[error("operation requires a c-case instance (r = 1), got r = {0}")]
    CCaseOnly(usize),

    /// A^T c = 0: x = 0 is the unique lasso solution and every design is
    /// optimal.
    #[error("pathological instance: A^T c = 0")]
    PathologicalInstance,

    /// The requested lambda lies outside the computed part of the path.
    #[error("lambda = {0} is outside the computed homotopy path (ends at lambda = {1})")]
    PathTooShort(f64, f64),

    /// Surviving design mass underflowed during renormalization.
    #[error("numerical underflow: surviving design mass {0:e} too small to renormalize")]
    NumericalUnderflow(f64),

    /// Invalid solver or instance parameter.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
