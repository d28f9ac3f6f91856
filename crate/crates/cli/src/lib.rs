//! Config-driven front end for the orbital-raman experiments.

pub mod calfile;
pub mod config;
pub mod run;

pub use config::{apply_overrides, load_config, parse_config, Command, Format, RunSpec};
pub use run::{run, RunOutcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}
