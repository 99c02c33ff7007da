//! Run manifest: one JSON file tying together the dataset, the seed prompt,
//! the backend and the optimizer configuration.

use promptevo::{BackendConfig, OptimizerConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset_manifest: PathBuf,
    pub seed_prompt_file: PathBuf,
    pub output_dir: PathBuf,
    pub backend: BackendConfig,
    #[serde(default)]
    pub config: OptimizerConfig,
    /// Optional directory of `*.txt` meta-prompt templates overriding the
    /// built-in set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_dir: Option<PathBuf>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut manifest: RunManifest =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        manifest.dataset_manifest = resolve(base, &manifest.dataset_manifest);
        manifest.seed_prompt_file = resolve(base, &manifest.seed_prompt_file);
        manifest.output_dir = resolve(base, &manifest.output_dir);
        if let Some(dir) = &manifest.template_dir {
            manifest.template_dir = Some(resolve(base, dir));
        }
        if let Some(cache) = &manifest.backend.cache_path {
            manifest.backend.cache_path = Some(resolve(base, cache));
        }
        Ok(manifest)
    }

    /// Referenced input paths must exist before a run starts.
    pub fn validate(&self) -> Result<(), String> {
        if !self.dataset_manifest.exists() {
            return Err(format!(
                "dataset manifest not found: {}",
                self.dataset_manifest.display()
            ));
        }
        if !self.seed_prompt_file.exists() {
            return Err(format!(
                "seed prompt file not found: {}",
                self.seed_prompt_file.display()
            ));
        }
        if let Some(dir) = &self.template_dir {
            if !dir.is_dir() {
                return Err(format!("template dir not found: {}", dir.display()));
            }
        }
        Ok(())
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
