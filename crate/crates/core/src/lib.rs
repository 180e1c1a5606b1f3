//! Bootstrap inference for the k-th largest coordinate of a high-dimensional
//! normalized sum.
//!
//! The crate provides the statistic pipeline (normalized sums, order
//! statistics, exceedance counts, factorial moments), six bootstrap
//! procedures (empirical, Gaussian / Mammen / Rademacher / Beta wild, and the
//! prepivoted double wild bootstrap), the Gaussian reference theory behind
//! them (Poisson approximation of Gaussian extremes, Edgeworth and
//! Cornish-Fisher corrections under diagonal covariance), and the
//! exponential-mixing block construction with its explicit remainder.
//!
//! Everything stochastic runs on splittable counter-based streams
//! ([`rng::Stream`]), so results are reproducible under any parallel
//! schedule.

pub mod bootstrap;
pub mod dist;
pub mod error;
pub mod gaussian;
pub mod mixing;
pub mod rng;
pub mod sampling;
pub mod stats;

pub use error::{Error, Result};
