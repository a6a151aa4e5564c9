//! Command-line driver and HTTP session service.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod play;
pub mod server;

pub use commands::{run, Cli, Command};
