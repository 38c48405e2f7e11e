//! Experiment configuration, ladder runs and report artifacts.

pub mod config;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind, Rung, Tolerances};
pub use report::{convergence_order, emit_report, read_snapshot, ConvergenceOrder, VerificationReport};
pub use run::run_experiment;
