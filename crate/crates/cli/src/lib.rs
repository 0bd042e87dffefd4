//! Command-line and HTTP front ends for `dragwarp-core`.

pub mod commands;
pub mod error;
pub mod inputs;
pub mod server;

pub use error::CliError;
