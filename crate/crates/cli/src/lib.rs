//! Command-line orchestration for the `she` experiments: configuration
//! files, deterministic data files and NDJSON run manifests.

pub mod config;
pub mod experiments;
pub mod manifest;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("manifest schema error: {0}")]
    Schema(String),
    #[error("experiment failed: {0}")]
    Run(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn run(e: impl std::fmt::Display) -> Self {
        CliError::Run(e.to_string())
    }
}

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const ASSERTION_FAILED: i32 = 1;
    pub const ERROR: i32 = 2;
}
