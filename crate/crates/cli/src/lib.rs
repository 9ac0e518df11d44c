//! Batch front-end for the qtasep library. Each command writes a CSV table
//! preceded by `# key=value` lines that record the full configuration.

pub mod commands;
pub mod config;

use qtasep::exact::ExactError;
use qtasep::identities::IdentityError;
use qtasep::process::{ParamError, SimError};
use thiserror::Error;

pub use commands::{cmd_compare, cmd_identities, cmd_pmf, cmd_qlap, cmd_simulate, Outcome};
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("output: {0}")]
    Write(#[from] std::io::Error),
}
