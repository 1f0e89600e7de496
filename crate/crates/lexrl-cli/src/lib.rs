//! Library surface of the experiment harness: configuration parsing,
//! schema-tagged CSV artifacts, policy files, and the experiment runner.
//! The `lexrl` binary is a thin command-line wrapper over [`runner`]; the
//! pieces live here so integration tests can drive and verify the same
//! code paths the binary uses.

use std::fmt;

pub mod config;
pub mod csvio;
pub mod policy;
pub mod runner;

/// Harness error, split by which exit code it maps to: configuration
/// problems exit 2, runtime failures exit 3.
#[derive(Debug)]
pub enum CliError {
    /// Bad input from the user: flags, config files, referenced paths.
    Config(String),
    /// A legitimate run failed while executing.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Shorthand for fallible harness functions.
pub type CliResult<T> = Result<T, CliError>;

/// Which objective comes first in a maze environment.
#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SchemeArg {
    /// Primary objective accumulates tile penalties along the path.
    Path,
    /// Primary objective pays only on reaching the goal.
    Endpoint,
}
