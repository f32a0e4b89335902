//! Experiment harness: configuration, orchestration, deterministic output
//! emission, terminal metrics, and the numerical verification suite.

pub mod config;
pub mod csv;
pub mod experiment;
pub mod metrics;
pub mod svg;
pub mod verify;

pub use config::{config_digest, parse_config, ExperimentConfig, ProblemSource};
pub use experiment::{assemble_problem, run_experiment, ExperimentOutcome, MethodOutcome};
pub use metrics::{compute_test_metrics, TestMetrics};
pub use verify::{verify_suite, VerifyLevel, VerifyReport};
