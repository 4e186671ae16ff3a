use std::path::{Path, PathBuf};

use aedes_core::train::{EpochMetrics, TrainConfig};
use serde::{Deserialize, Serialize};

/// Everything needed to rerun a training job: the fully resolved config and
/// a fingerprint of the data it saw. Deliberately free of timestamps and
/// absolute output paths so that strict reruns produce identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub dataset: DatasetInfo,
    pub artifacts: Artifacts,
    pub initial_train_loss: f64,
    pub final_epoch: Option<EpochMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic { n_per_class: usize },
    Directory { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub source: DatasetSource,
    pub count: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub skipped: usize,
    /// SHA-256 over file names, labels and decoded pixels.
    pub fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub model: String,
    pub model_bytes: usize,
    pub model_version: String,
    pub metrics_csv: String,
    pub metrics_json: String,
}

impl RunManifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(Self::FILE_NAME);
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Reads a training config from either a run manifest or a bare config file.
pub fn read_config(path: &Path) -> Result<TrainConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let config = match value.get("config") {
        Some(inner) if value.get("tool").is_some() => inner.clone(),
        _ => value,
    };
    serde_json::from_value(config).map_err(|e| format!("{}: not a training config: {e}", path.display()))
}
