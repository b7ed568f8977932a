//! File formats, run manifests and the command-line interface on top of
//! `netspill-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

pub use commands::run;
pub use error::{CliError, Result};
