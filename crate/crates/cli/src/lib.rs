//! Simulation harness for the k-th order statistic bootstrap study:
//! declarative experiment configuration, the parallel Monte Carlo driver
//! with replication-level checkpointing, size-table emission, and the
//! diagnostics report.

pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod table;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Invalid configuration; the CLI exits with code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Failure during execution; the CLI exits with code 3.
    #[error("runtime error: {0}")]
    Runtime(String),
}
