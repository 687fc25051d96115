//! Command-line harness: configuration, recipes and artifact output.

pub mod cli;
pub mod config;
pub mod output;
pub mod recipes;

pub use cli::main;
pub use config::{CheckpointPolicy, Experiment, ExperimentConfig, OutputFormat};
pub use recipes::{run, verify_all, RunOutcome, VerifyAllOptions};
