//! Experiment driver for the `nkconsensus` library: configuration, run
//! directories with manifests, and one function per CLI verb.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod run;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use run::RunContext;
