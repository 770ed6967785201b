//! Orchestration of experiments: configuration and presets, trajectory runs
//! with CSV and checkpoint output, epsilon sweeps, and the invariant suite.

pub mod config;
pub mod runner;
pub mod sink;
pub mod verify;

pub use config::{preset, ExperimentConfig, PRESETS};
pub use runner::{
    run_epsilon, run_experiment, summarize, sweep_rows, sweep_table, Command, EpsilonRun, ExperimentReport, Manifest,
    RunStatus, Setup, SweepRow, TrajectorySummary,
};
pub use sink::{format_value, DiagnosticsSink, COLUMNS};
pub use verify::{verify_suite, CheckResult, Outcome, VerifyOptions};
