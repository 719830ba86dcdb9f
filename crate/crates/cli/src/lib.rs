//! Driver for the built-in benchmarks: configuration, the time loop and artifact output.

pub mod config;
pub mod output;
pub mod run;

pub use config::{LimiterKind, Overrides, RunConfig, SolverKind};
pub use run::{convergence_suite, run, RunSummary, Sweep};
