//! Library side of the `symloss` command-line tool: config parsing,
//! subcommands and artifact writers.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use error::{exit, CliError, Result};
