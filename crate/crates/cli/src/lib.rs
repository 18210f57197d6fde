//! Command-line driver for `kfgraph`: family configs, graph files and the
//! report-producing subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{run, Cli, SCHEMA_VERSION};
pub use error::{exit, CliError};
