//! Experiment orchestration for `delocsim`: TOML experiment specs, a
//! resumable task manifest, parallel realization sweeps and the ensemble
//! reductions written next to the per-realization outputs.

// Range checks are written negated so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod error;
pub mod fit;
pub mod manifest;
pub mod run;
pub mod spec;

pub use error::{CliError, CliResult};
pub use manifest::{RunManifest, TaskStatus};
pub use run::{resolve_workers, run_experiment, RunOptions, RunReport, Summary, WORKERS_ENV};
pub use spec::{ExperimentSpec, GeometrySpec, Mode, PatternPolicy};
