//! Shared fixtures for integration tests: a synthetic multilabel task with
//! unique sample inputs, and helpers to stand up splits and mock gateways.

use promptevo::dataset::{DatasetSplits, GoldAnswer, Sample, TaskSpec};
use promptevo::{AnswerMode, MetricKind};

pub const VOCAB: [&str; 4] = ["alpha", "beta", "gamma", "delta"];

pub fn task() -> TaskSpec {
    TaskSpec {
        name: "synthetic".into(),
        answer_mode: AnswerMode::Multilabel,
        label_vocabulary: Some(VOCAB.iter().map(|s| s.to_string()).collect()),
        metric: MetricKind::StrictSetAccuracy,
    }
}

/// Unique, collision-free sample inputs; labels cycle through small subsets
/// of the vocabulary.
pub fn samples(n: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let labels: Vec<&str> = match i % 4 {
                0 => vec!["alpha"],
                1 => vec!["beta"],
                2 => vec!["alpha", "gamma"],
                _ => vec![],
            };
            Sample {
                id: format!("s{i:04}"),
                input: format!("Inspect item {i:04} and tag it."),
                gold: GoldAnswer::label_set(labels),
            }
        })
        .collect()
}

pub fn splits(train: usize, validation: usize, test: usize) -> DatasetSplits {
    let all = samples(train + validation + test);
    DatasetSplits {
        train: all[..train].to_vec(),
        validation: all[train..train + validation].to_vec(),
        test: all[train + validation..].to_vec(),
        seed: 0,
    }
}

pub const SEED_PROMPT: &str =
    "Tag the following item with every matching label and finish with an ANSWER line: {input}";
