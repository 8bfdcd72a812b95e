//! Command-line front end: configuration, file formats and commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::{CliError, Result};
