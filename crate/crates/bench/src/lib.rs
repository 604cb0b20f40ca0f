//! Simulation and benchmark harness for the `selfcal` estimator: TOML
//! experiment configs, single-scenario runs, and Monte-Carlo SNR sweeps with
//! ablated baselines, written out as CSV and JSON.

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{ExperimentConfig, Method};
pub use experiment::{ablation_methods, run_single, run_sweep, summarize, TrialRecord};
