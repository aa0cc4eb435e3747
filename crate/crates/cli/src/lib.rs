//! Orchestration behind the `afc` binary: configuration, one function per
//! experiment, and reproducible output directories with manifests.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Command};
pub use config::{load, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] afc_core::Error),

    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure, 1 when outputs cannot be written.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(_) => 3,
            CliError::Output(_) => 1,
        }
    }
}
