//! Append-only record/replay cache: one JSON line per (key, response) pair.
//! Later entries for the same key win, so re-recording a run is harmless.

use super::{CompletionResponse, GatewayError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub response: CompletionResponse,
}

pub fn load_cache(path: &Path) -> Result<HashMap<String, CompletionResponse>, GatewayError> {
    let file = std::fs::File::open(path).map_err(|e| GatewayError::Cache {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut map = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GatewayError::Cache {
            path: path.to_path_buf(),
            message: format!("line {}: {}", i + 1, e),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CacheRecord = serde_json::from_str(&line).map_err(|e| GatewayError::Cache {
            path: path.to_path_buf(),
            message: format!("line {}: {}", i + 1, e),
        })?;
        map.insert(record.key, record.response);
    }
    Ok(map)
}
