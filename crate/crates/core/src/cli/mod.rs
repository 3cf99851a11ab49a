//! Experiment runner: a JSON config in, CSV/JSON/text artifacts out.

mod config;
mod run;

pub use config::{Command, ExperimentConfig, DEFAULT_DEPTH};
pub use run::{run, Outcome};
