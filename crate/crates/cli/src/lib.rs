//! Command-line front end: configuration, run manifests, stage wiring and
//! the end-to-end pipeline.

pub mod config;
pub mod exit;
pub mod manifest;
pub mod pipeline;
pub mod stages;

pub use exit::{CliError, CliResult, ExitKind};
