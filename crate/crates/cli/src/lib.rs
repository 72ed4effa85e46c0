//! `acnlab`: runs the experiments of the workspace from a JSON config and
//! writes CSV tables plus a manifest under an output directory.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod output;

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config; exit code 1.
    Config(String),
    /// Anything that fails after the config was accepted; exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<acn_core::Error> for CliError {
    fn from(e: acn_core::Error) -> Self {
        match e {
            acn_core::Error::Config(m) => CliError::Config(m),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

pub use cli::run;
