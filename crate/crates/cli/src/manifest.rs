use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Overflow,
    Failed,
}

/// Labels of the random streams split from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub embedding: u64,
    /// `(purpose, split label)` pairs.
    pub streams: Vec<(String, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub mflab_cli: String,
    pub mflab_core: String,
    pub manifest_format: u32,
}

impl Versions {
    pub fn current() -> Self {
        Versions {
            mflab_cli: env!("CARGO_PKG_VERSION").into(),
            mflab_core: mflab_core::VERSION.into(),
            manifest_format: 1,
        }
    }
}

/// Everything needed to replay a run: the effective configuration with
/// overrides applied, the seeds, and the tool versions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub status: RunStatus,
    #[serde(default)]
    pub error: Option<String>,
    pub config: ExperimentConfig,
    pub seeds: SeedRecord,
    pub versions: Versions,
    /// Seconds since the Unix epoch at start.
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub threads: usize,
    /// Artifacts written by the run, relative to the output directory.
    pub metrics: Vec<String>,
    pub snapshots: Vec<String>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Metrics and snapshot files, in the order they were written.
    pub fn artifacts(&self) -> impl Iterator<Item = &str> {
        self.metrics.iter().chain(&self.snapshots).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_read_round_trip() {
        let config = ExperimentConfig::from_json(
            r#"{ "kind": "grad-check", "seed": 9, "arch": { "input_dim": 1, "widths": [2, 1] },
                 "data": { "teacher": { "kind": "linear", "weights": [1.0] }, "panel_size": 4 },
                 "embedding": { "scheme": "bidiverse", "seed": 1 } }"#,
        )
        .unwrap();
        let m = Manifest {
            status: RunStatus::Ok,
            error: None,
            config,
            seeds: SeedRecord { master: 9, embedding: 1, streams: vec![("codes".into(), 1)] },
            versions: Versions::current(),
            started_unix: 0,
            wall_clock_seconds: 0.25,
            threads: 1,
            metrics: vec!["grad_check.csv".into()],
            snapshots: vec!["codes.txt".into()],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = m.write(dir.path()).unwrap();
        assert_eq!(path.file_name().unwrap(), MANIFEST_FILE);
        assert_eq!(Manifest::read(&path).unwrap(), m);
        assert_eq!(m.artifacts().collect::<Vec<_>>(), ["grad_check.csv", "codes.txt"]);
    }
}
