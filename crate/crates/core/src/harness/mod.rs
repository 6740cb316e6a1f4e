//! Audit checks, experiment configs and the experiment runner.

mod checks;
mod config;
mod resolve;
mod runner;

pub use checks::*;
pub use config::{parse_grid, parse_mode, CheckKind, CheckSpec, CompetitorSpec, ExperimentConfig, ReductionConfig};
pub use resolve::{expression_names, parse_observation, resolve_estimator, resolve_test, ResolveContext, Resolved};
pub use runner::{run_experiment, run_reduction, CheckSummary, Row, RunReport, Summary, CSV_HEADER, DOMINANCE_TOL, SCHEMA_VERSION};
