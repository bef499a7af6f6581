//! The `ktbench` command-line tool.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod selftest;
pub mod settings;

pub use args::Cli;
pub use commands::run;
pub use error::{CliError, Result};
