//! Experiment runner for the `emsa` training library: configuration
//! presets, run directories and the diagnostics entry point.

pub mod config;
pub mod output;
pub mod run;

pub use config::{Experiment, RunConfig, OUTPUT_DIR_ENV};
pub use run::{compare_command, data_info, diag_command, train_command, RunSummary};
