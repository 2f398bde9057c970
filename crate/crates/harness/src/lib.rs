//! Experiment harness for the backup-plan controller: configs, closed-loop
//! runs, the random-failure test, certification front ends and benchmarks.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod failure;
pub mod output;
pub mod sim;

pub use config::{ExperimentConfig, Problem};
pub use error::{HarnessError, Result};
