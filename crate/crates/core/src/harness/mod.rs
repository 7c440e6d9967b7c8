//! Drivers, monitors and the experiment grid.

pub mod config;
pub mod drivers;
pub mod experiment;
pub mod monitor;
pub mod simulate;
pub mod suites;
pub mod svg;

pub use config::{Algorithm, ExperimentConfig, OracleMode, OutputPaths, ProblemSpec};
pub use drivers::{
    oscillation_amplitude, projected_subgrad_trace, run_cell, run_projected_subgrad, run_zo_sgd,
    zo_sgd_trace,
};
pub use experiment::{
    bias_sweep, bootstrap_order_fraction, execute, median, quantile, reproduction_checks,
    run_experiment, u_shape, write_outputs, write_sweep, BiasSweepReport, CellOutcome, Check,
    ExperimentOutcome, ExperimentReport, LambdaSummary, ReferenceCheck, SweepRow, UShape,
};
pub use monitor::{monitor, sri_membership, GapSample, MembershipAudit, RunSummary};
pub use simulate::{simulate_sri, NoiseLaw};
pub use suites::{
    apt_suite, certify_suite, write_apt, write_certify, AptRow, CertifySuite, SuiteEntry,
};
