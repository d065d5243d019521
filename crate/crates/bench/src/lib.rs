//! Experiment harness for the `fhmimo` beamforming solvers: configuration
//! files, trace output, the scenario runner and a self-check oracle.

pub mod config;
pub mod experiment;
pub mod oracle;
pub mod trace;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("oracle violation: {0}")]
    Oracle(String),
}

impl BenchError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 1,
            BenchError::Io(_) | BenchError::Solver(_) => 2,
            BenchError::Oracle(_) => 3,
        }
    }
}
