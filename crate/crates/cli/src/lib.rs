//! Reproducible experiment runner: JSON configs in; metrics CSVs,
//! snapshot containers and a replay manifest out.

pub mod config;
pub mod error;
pub mod manifest;
pub mod run;
pub mod sweep;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
pub use manifest::{Manifest, RunStatus};
pub use run::{replay, run_experiment, RunOutput};
