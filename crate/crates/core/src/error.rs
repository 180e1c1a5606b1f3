//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Correlation parameter outside the valid range for the design family.
    #[error("invalid correlation parameter rho = {rho} ({reason})")]
    InvalidRho { rho: f64, reason: &'static str },

    /// An explicit correlation matrix failed validation.
    #[error("invalid explicit correlation matrix: {0}")]
    InvalidExplicit(&'static str),

    /// Cholesky pivot fell below tolerance.
    #[error("matrix not positive definite: pivot {pivot:.3e} at column {index}")]
    NonPositiveDefinite { index: usize, pivot: f64 },

    /// Generic parameter outside its domain.
    #[error("domain error: {0}")]
    Domain(&'static str),

    /// Order-statistic rank outside `[1, d]`.
    #[error("order-statistic rank {k} outside [1, {d}]")]
    IndexError { k: usize, d: usize },

    /// Quantile of an empty sample requested.
    #[error("empty input")]
    EmptyInput,

    /// Second-level multiplier law must match the third moment.
    #[error("second-level multiplier law must have E[v^3] = 1, got gamma = {0}")]
    InvalidSecondLevelLaw(f64),

    /// Closed-form Edgeworth corrections require a diagonal covariance.
    #[error("covariance matrix is not diagonal (off-diagonal entry {max_offdiag:.3e})")]
    NotDiagonal { max_offdiag: f64 },

    /// Nominal level outside the quantile window.
    #[error("alpha = {alpha} outside the quantile window ({eps}, {})", 1.0 - eps)]
    WindowError { alpha: f64, eps: f64 },

    /// Block construction has no complete block.
    #[error("degenerate block layout: m_d + ell_d = {block} exceeds d = {d}")]
    DegenerateLayout { block: f64, d: f64 },

    /// Path shorter than the block construction requires.
    #[error("path length {len} shorter than required {required}")]
    LengthError { len: usize, required: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
