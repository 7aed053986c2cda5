//! Config-driven front end for `npt-core`: parse an experiment file, run
//! synthesis or re-verification, and emit a JSON report.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{cmd_synthesize, cmd_verify, load_config, Outcome, Overrides};
pub use config::{parse_config, ExperimentConfig};
pub use error::CliError;
