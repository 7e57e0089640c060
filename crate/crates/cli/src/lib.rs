//! File formats and subcommands of the `objguide` tool.

pub mod commands;
pub mod error;
pub mod formats;

pub use error::{CliError, CliResult};
