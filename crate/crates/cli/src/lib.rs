//! Command-line front end: configuration, data loading and report output.

pub mod commands;
pub mod config;
pub mod error;
pub mod images;
pub mod report;

pub use commands::execute;
pub use config::{Command, RunConfig};
pub use error::{CliError, CliResult};
