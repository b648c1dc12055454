//! Experiment driver for `nonconvex-da`: config files, seed sweeps, regret CSVs and reports.

pub mod config;
pub mod experiment;
pub mod format;
pub mod report;

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{run, write_outputs, Experiment, SeedResult, SummaryRow};
pub use report::{build_report, read_summary, Report, Summary};
