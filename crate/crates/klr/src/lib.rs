//! File IO, experiment configuration, a deterministic parallel driver and
//! the command-line front end for `klr-core`.

pub mod commands;
pub mod config;
pub mod driver;
pub mod error;
pub mod io;

pub use error::{CliError, CliResult};
pub use klr_core;
