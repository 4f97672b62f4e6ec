//! Files, experiments and the command line around `longsynth-core`.

pub mod error;
pub mod harness;
pub mod ingest;
pub mod output;
pub mod queries;
pub mod simulate;

pub use error::{HarnessError, Result};
pub use harness::{run_experiment, DataSource, Experiment, Mode, RunManifest};
