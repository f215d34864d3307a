//! Command-line layer for GPT density estimation: configuration, CSV input and
//! output, run manifests and the subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
