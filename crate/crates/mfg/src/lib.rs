//! Parallel Monte Carlo drivers, run configuration, result files and the
//! command-line front end for `levy-mfg-core`.

pub mod commands;
pub mod config;
pub mod drivers;
pub mod error;
pub mod output;

pub use levy_mfg_core as core;

pub use commands::{run, Command};
pub use config::RunConfig;
pub use drivers::Parallel;
pub use error::CliError;
