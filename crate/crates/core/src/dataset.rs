//! Loading labeled task data, parsing gold answers and producing
//! deterministic train/validation/test splits.

use crate::domain::MetricKind;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("labels not in vocabulary: {tokens:?}")]
    VocabularyViolation { row: Option<usize>, tokens: Vec<String> },
    #[error("split sizes need {required} samples, only {available} available")]
    InsufficientSamples { required: usize, available: usize },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid task spec: {0}")]
    InvalidSpec(String),
    #[error("invalid dataset manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

/// One labeled task instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub input: String,
    pub gold: GoldAnswer,
}

/// Gold answer: either a label set over a declared vocabulary or a single
/// free-form choice string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GoldAnswer {
    LabelSet { labels: BTreeSet<String> },
    Choice { answer: String },
}

impl GoldAnswer {
    pub fn label_set(labels: impl IntoIterator<Item = impl Into<String>>) -> Self {
        GoldAnswer::LabelSet {
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn choice(answer: impl Into<String>) -> Self {
        GoldAnswer::Choice {
            answer: answer.into(),
        }
    }
}

/// Canonical human-readable rendering, used in few-shot examples, judge
/// prompts and the synthetic backend.
pub fn render_gold(gold: &GoldAnswer) -> String {
    match gold {
        GoldAnswer::LabelSet { labels } => {
            if labels.is_empty() {
                "none".to_string()
            } else {
                labels.iter().cloned().collect::<Vec<_>>().join(", ")
            }
        }
        GoldAnswer::Choice { answer } => answer.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    Multilabel,
    Choice,
}

/// What the task looks like: answer shape, vocabulary and scoring metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub answer_mode: AnswerMode,
    #[serde(default)]
    pub label_vocabulary: Option<Vec<String>>,
    pub metric: MetricKind,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.answer_mode == AnswerMode::Multilabel {
            match &self.label_vocabulary {
                Some(v) if !v.is_empty() => {}
                _ => {
                    return Err(DatasetError::InvalidSpec(
                        "multilabel tasks require a non-empty label vocabulary".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> &[String] {
        self.label_vocabulary.as_deref().unwrap_or(&[])
    }
}

/// Disjoint train/validation/test partitions of a sample pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplits {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
    pub seed: u64,
}

impl DatasetSplits {
    pub fn split(&self, split: crate::domain::Split) -> &[Sample] {
        match split {
            crate::domain::Split::Train => &self.train,
            crate::domain::Split::Validation => &self.validation,
            crate::domain::Split::Test => &self.test,
        }
    }

    pub fn all_samples(&self) -> impl Iterator<Item = &Sample> {
        self.train
            .iter()
            .chain(self.validation.iter())
            .chain(self.test.iter())
    }
}

/// Parse a raw multilabel cell: comma/semicolon separated, case-insensitive
/// against the vocabulary, whitespace-trimmed, duplicates collapsed.
pub fn parse_label_set(
    raw: &str,
    vocabulary: &[String],
) -> Result<BTreeSet<String>, DatasetError> {
    if vocabulary.is_empty() {
        return Err(DatasetError::InvalidSpec(
            "label vocabulary must not be empty".into(),
        ));
    }
    let mut labels = BTreeSet::new();
    let mut offenders = Vec::new();
    for token in raw.split([',', ';']) {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let lowered = token.to_lowercase();
        if vocabulary.iter().any(|v| v.to_lowercase() == lowered) {
            labels.insert(lowered);
        } else {
            offenders.push(token.to_string());
        }
    }
    if !offenders.is_empty() {
        return Err(DatasetError::VocabularyViolation {
            row: None,
            tokens: offenders,
        });
    }
    Ok(labels)
}

fn gold_from_raw(raw: &str, task: &TaskSpec, row: usize) -> Result<GoldAnswer, DatasetError> {
    match task.answer_mode {
        AnswerMode::Multilabel => {
            let labels =
                parse_label_set(raw, task.vocabulary()).map_err(|e| match e {
                    DatasetError::VocabularyViolation { tokens, .. } => {
                        DatasetError::VocabularyViolation {
                            row: Some(row),
                            tokens,
                        }
                    }
                    other => other,
                })?;
            Ok(GoldAnswer::LabelSet { labels })
        }
        AnswerMode::Choice => {
            let answer = raw.trim();
            if answer.is_empty() {
                return Err(DatasetError::Parse {
                    row,
                    message: "choice answer is empty".into(),
                });
            }
            Ok(GoldAnswer::Choice {
                answer: answer.to_string(),
            })
        }
    }
}

/// Load samples from a CSV file (header row required) or a line-delimited
/// JSON file, keeping row order. Rows with unparsable gold fields abort the
/// load instead of being skipped.
pub fn load_dataset(
    path: &Path,
    task: &TaskSpec,
    input_column: &str,
    gold_column: &str,
) -> Result<Vec<Sample>, DatasetError> {
    task.validate()?;
    let is_csv = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    if is_csv {
        load_csv(path, task, input_column, gold_column)
    } else {
        load_jsonl(path, task, input_column, gold_column)
    }
}

fn load_csv(
    path: &Path,
    task: &TaskSpec,
    input_column: &str,
    gold_column: &str,
) -> Result<Vec<Sample>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| DatasetError::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let input_idx = headers
        .iter()
        .position(|h| h == input_column)
        .ok_or_else(|| DatasetError::Parse {
            row: 0,
            message: format!("missing input column '{input_column}'"),
        })?;
    let gold_idx = headers
        .iter()
        .position(|h| h == gold_column)
        .ok_or_else(|| DatasetError::Parse {
            row: 0,
            message: format!("missing gold column '{gold_column}'"),
        })?;

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DatasetError::Parse {
            row,
            message: e.to_string(),
        })?;
        let input = record.get(input_idx).unwrap_or("").trim().to_string();
        if input.is_empty() {
            return Err(DatasetError::Parse {
                row,
                message: "input cell is empty".into(),
            });
        }
        let gold = gold_from_raw(record.get(gold_idx).unwrap_or(""), task, row)?;
        samples.push(Sample {
            id: format!("row-{row}"),
            input,
            gold,
        });
    }
    Ok(samples)
}

fn load_jsonl(
    path: &Path,
    task: &TaskSpec,
    input_column: &str,
    gold_column: &str,
) -> Result<Vec<Sample>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                row,
                message: e.to_string(),
            })?;
        let input = value
            .get(input_column)
            .and_then(|v| v.as_str())
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| DatasetError::Parse {
                row,
                message: format!("missing or empty '{input_column}' field"),
            })?;
        // Gold field may be a string or, for multilabel rows, an array.
        let raw_gold = match value.get(gold_column) {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().unwrap_or_default().to_string())
                .collect::<Vec<_>>()
                .join(","),
            _ => {
                return Err(DatasetError::Parse {
                    row,
                    message: format!("missing '{gold_column}' field"),
                })
            }
        };
        let gold = gold_from_raw(&raw_gold, task, row)?;
        samples.push(Sample {
            id: format!("row-{row}"),
            input,
            gold,
        });
    }
    Ok(samples)
}

/// Seeded shuffle followed by train/validation/test slices, in that order.
/// Pure in (samples, sizes, seed): repeated calls yield identical splits.
pub fn split_dataset(
    samples: &[Sample],
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<DatasetSplits, DatasetError> {
    let (train_n, val_n, test_n) = sizes;
    let required = train_n + val_n + test_n;
    if required > samples.len() {
        return Err(DatasetError::InsufficientSamples {
            required,
            available: samples.len(),
        });
    }
    let mut indices: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let take = |range: std::ops::Range<usize>| -> Vec<Sample> {
        indices[range].iter().map(|&i| samples[i].clone()).collect()
    };
    Ok(DatasetSplits {
        train: take(0..train_n),
        validation: take(train_n..train_n + val_n),
        test: take(train_n + val_n..required),
        seed,
    })
}

/// On-disk description of a dataset: task fields, column mapping and split
/// sizes. Paths inside are resolved relative to the manifest file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub answer_mode: AnswerMode,
    #[serde(default)]
    pub label_vocabulary: Option<Vec<String>>,
    pub metric: MetricKind,
    pub data_file: PathBuf,
    pub input_column: String,
    pub gold_column: String,
    pub split_sizes: SplitSizes,
    #[serde(default)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| DatasetError::Manifest {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        manifest.task_spec().validate()?;
        Ok(manifest)
    }

    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec {
            name: self.name.clone(),
            answer_mode: self.answer_mode,
            label_vocabulary: self.label_vocabulary.clone(),
            metric: self.metric.clone(),
        }
    }

    /// Load and split the referenced data file.
    pub fn load_splits(&self, manifest_dir: &Path) -> Result<DatasetSplits, DatasetError> {
        let task = self.task_spec();
        let data_path = if self.data_file.is_absolute() {
            self.data_file.clone()
        } else {
            manifest_dir.join(&self.data_file)
        };
        let samples = load_dataset(&data_path, &task, &self.input_column, &self.gold_column)?;
        split_dataset(
            &samples,
            (
                self.split_sizes.train,
                self.split_sizes.validation,
                self.split_sizes.test,
            ),
            self.split_seed,
        )
    }
}
