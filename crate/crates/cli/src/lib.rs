//! Command-line pipeline: ingest, interface-event rules, daily state
//! updates, queries, learning and reports over one store directory.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod workspace;

pub use cli::Cli;
pub use commands::run;
pub use error::{CliError, ErrorKind, Result};
