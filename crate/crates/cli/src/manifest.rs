use std::path::{Path, PathBuf};
use std::time::SystemTime;

use promptplan::PipelineConfig;
use serde::{Deserialize, Serialize};

use crate::config::{BackendSpec, RunSettings};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const STATS_FILE: &str = "stats.csv";

/// Everything needed to repeat a run; written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub timestamp: String,
    pub config: PipelineConfig,
    pub backend: BackendSpec,
    pub fixtures: PathBuf,
    pub output_dir: PathBuf,
    pub jobs: usize,
}

impl RunManifest {
    pub fn new(settings: &RunSettings, output_dir: PathBuf) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: humantime::format_rfc3339_seconds(SystemTime::now()).to_string(),
            config: settings.config,
            backend: settings.backend.clone(),
            fixtures: settings.fixtures.clone(),
            output_dir,
            jobs: settings.jobs,
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        crate::fsutil::read_json(path)
    }

    /// The manifest of `run_dir`, if it has one.
    pub fn of_run(run_dir: &Path) -> anyhow::Result<Option<Self>> {
        let p = run_dir.join(MANIFEST_FILE);
        if p.is_file() {
            Self::load(&p).map(Some)
        } else {
            Ok(None)
        }
    }
}
