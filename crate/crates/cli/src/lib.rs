//! Config-driven experiment runner for the `nica` estimators.
//!
//! An experiment is a JSON [`ExperimentConfig`]; [`run_experiment`] executes
//! it across seeds and writes `results.csv`, per-seed reports and signals,
//! training curves, weights, `mcc.dat` and `summary.json`. [`calibrate`]
//! freezes acceptance thresholds into `fixtures.json`.

pub mod calibrate;
pub mod config;
mod error;
pub mod runner;

pub use calibrate::{calibrate, Fixtures, MetricFixture};
pub use config::{EvalTarget, ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use runner::{build_dataset, read_results, run_experiment, ResultRecord, RunOptions, RunSummary, Status};
