//! Data loading, experiment configuration and the command pipeline.

pub mod config;
pub mod experiment;
pub mod mnist;

pub use config::ExperimentConfig;
pub use experiment::{resolve_tech, run_experiment, Command, Outcome};
