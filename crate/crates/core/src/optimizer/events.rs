//! Append-only run history: every observable step of a run becomes one
//! line-delimited JSON event. Reports are pure folds over these events, so
//! anything emitted can be recomputed from the history file alone.

use crate::domain::{CandidateId, MutationKind, Split, StrategyKind};
use crate::evaluation::selection::{RankedCandidate, SelectionMethodName};
use serde::{Deserialize, Serialize};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum HistoryError {
    #[error("history file {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("history file {path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Validation score a parent carried into a generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: CandidateId,
    pub correct: u64,
    pub total: u64,
}

/// Per-purpose request deltas accumulated over one generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct GenerationCalls {
    pub generation: u64,
    pub prediction: u64,
    pub judging: u64,
}

impl GenerationCalls {
    pub fn total(&self) -> u64 {
        self.generation + self.prediction + self.judging
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RunEvent {
    GenerationStarted {
        generation: u64,
        parent_pool: Vec<PoolEntry>,
    },
    CandidateCreated {
        generation: u64,
        id: CandidateId,
        text: String,
        strategy: StrategyKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mutation: Option<MutationKind>,
        parent_ids: Vec<CandidateId>,
        /// True when another strategy's quota fell back to this candidate.
        #[serde(default)]
        fallback: bool,
    },
    CandidateEvaluated {
        generation: u64,
        id: CandidateId,
        split: Split,
        correct: u64,
        total: u64,
        llm_calls: u64,
    },
    SelectionCompleted {
        generation: u64,
        method: SelectionMethodName,
        ranked: Vec<RankedCandidate>,
        total_calls: u64,
        parent_pool: Vec<CandidateId>,
        calls: GenerationCalls,
    },
}

impl RunEvent {
    pub fn generation(&self) -> u64 {
        match self {
            RunEvent::GenerationStarted { generation, .. }
            | RunEvent::CandidateCreated { generation, .. }
            | RunEvent::CandidateEvaluated { generation, .. }
            | RunEvent::SelectionCompleted { generation, .. } => *generation,
        }
    }
}

/// Append events for one generation as a single write.
pub fn append_events(path: &Path, events: &[RunEvent]) -> Result<(), HistoryError> {
    if events.is_empty() {
        return Ok(());
    }
    let mut chunk = String::new();
    for event in events {
        chunk.push_str(&serde_json::to_string(event).expect("events serialize"));
        chunk.push('\n');
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| HistoryError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    file.write_all(chunk.as_bytes()).map_err(|e| HistoryError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_events(path: &Path) -> Result<Vec<RunEvent>, HistoryError> {
    let file = std::fs::File::open(path).map_err(|e| HistoryError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HistoryError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| HistoryError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

/// Drop events past `last_generation` and rewrite the file; used on resume
/// so a partially written generation cannot double-count.
pub fn truncate_after(path: &Path, last_generation: u64) -> Result<Vec<RunEvent>, HistoryError> {
    let events = read_events(path)?;
    let kept: Vec<RunEvent> = events
        .into_iter()
        .filter(|e| e.generation() <= last_generation)
        .collect();
    let mut chunk = String::new();
    for event in &kept {
        chunk.push_str(&serde_json::to_string(event).expect("events serialize"));
        chunk.push('\n');
    }
    std::fs::write(path, chunk).map_err(|e| HistoryError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(kept)
}
