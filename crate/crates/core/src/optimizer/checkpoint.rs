//! Versioned JSON checkpoints so interrupted runs resume exactly where they
//! stopped. The embedded config hash guards against resuming under a
//! different configuration.

use super::GenerationState;
use std::path::{Path, PathBuf};
use thiserror::Error;

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint {path} is corrupt: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("checkpoint {path} was written under config {found}, expected {expected}")]
    ConfigMismatch {
        path: PathBuf,
        found: String,
        expected: String,
    },
    #[error("checkpoint {path}: {message}")]
    Io { path: PathBuf, message: String },
}

pub fn checkpoint_save(state: &GenerationState, path: &Path) -> Result<(), CheckpointError> {
    let json = serde_json::to_string_pretty(state).expect("state serializes");
    // Write-then-rename keeps a crash from leaving a torn checkpoint.
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, json.as_bytes()).map_err(|e| CheckpointError::Io {
        path: tmp.clone(),
        message: e.to_string(),
    })?;
    std::fs::rename(&tmp, path).map_err(|e| CheckpointError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Load a checkpoint, verifying version and config hash. A mismatched hash
/// only passes when `allow_config_mismatch` is set.
pub fn checkpoint_load(
    path: &Path,
    expected_config_hash: &str,
    allow_config_mismatch: bool,
) -> Result<GenerationState, CheckpointError> {
    let text = std::fs::read_to_string(path).map_err(|e| CheckpointError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let state: GenerationState =
        serde_json::from_str(&text).map_err(|e| CheckpointError::Corrupt {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    if state.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Corrupt {
            path: path.to_path_buf(),
            message: format!("unsupported version {}", state.version),
        });
    }
    if state.config_hash != expected_config_hash && !allow_config_mismatch {
        return Err(CheckpointError::ConfigMismatch {
            path: path.to_path_buf(),
            found: state.config_hash,
            expected: expected_config_hash.to_string(),
        });
    }
    Ok(state)
}

pub(super) fn current_version() -> u32 {
    CHECKPOINT_VERSION
}
