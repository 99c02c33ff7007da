//! Scoring prompts against sample sets: prediction extraction, per-sample
//! grading under the three metrics, and full-prompt evaluation through the
//! gateway. Selection strategies live in [`selection`].

pub mod selection;

pub use selection::{
    select_bandit_ucbe, select_complete, select_successive_halving, BanditConfig, HalvingConfig,
    RankedCandidate, SelectionMethod, SelectionMethodName, SelectionOutcome,
};

use crate::dataset::{render_gold, AnswerMode, GoldAnswer, Sample, TaskSpec};
use crate::domain::{Accuracy, CandidateId, MetricKind, PromptCandidate, PLACEHOLDER};
use crate::gateway::{CompletionRequest, Gateway, GatewayError, ModelSpec, Purpose};
use crate::templates::{TemplateError, TemplateSet, JUDGE_TEMPLATE};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("judge output contains no verdict token: {output:?}")]
    JudgeUnparseable { output: String },
    #[error("metric {metric} cannot grade a {answer} answer")]
    MetricMismatch {
        metric: &'static str,
        answer: &'static str,
    },
    #[error("{failed} of {total} prediction calls failed, aborting evaluation")]
    TooManyFailures { failed: usize, total: usize },
    #[error("no samples to evaluate")]
    EmptySampleSet,
    #[error("invalid selection config: {0}")]
    ConfigError(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Outcome for one sample inside an [`EvalResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub sample_id: String,
    pub correct: bool,
    pub raw_output: String,
    /// True when the prediction call failed and was counted incorrect.
    #[serde(default)]
    pub failed: bool,
}

/// Scores of one candidate over one sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub candidate_id: CandidateId,
    pub per_sample: Vec<SampleOutcome>,
    /// Prediction calls plus judge calls issued for this evaluation.
    pub llm_calls: u64,
}

impl EvalResult {
    pub fn accuracy(&self) -> Accuracy {
        Accuracy::new(
            self.per_sample.iter().filter(|s| s.correct).count() as u64,
            self.per_sample.len() as u64,
        )
    }
}

/// Parse a model's raw output into a prediction shaped like a gold answer.
///
/// Multilabel: scan for vocabulary labels (case-insensitive, word-boundary),
/// preferring text after the final `ANSWER:` marker. Choice: the text after
/// the final `ANSWER:` marker, falling back to the last non-empty line.
pub fn extract_prediction(raw_output: &str, task: &TaskSpec) -> GoldAnswer {
    match task.answer_mode {
        AnswerMode::Multilabel => {
            let region = after_final_marker(raw_output).unwrap_or(raw_output);
            let lowered = region.to_lowercase();
            let labels = task
                .vocabulary()
                .iter()
                .filter(|label| contains_word(&lowered, &label.to_lowercase()))
                .map(|label| label.to_lowercase())
                .collect();
            GoldAnswer::LabelSet { labels }
        }
        AnswerMode::Choice => {
            let answer = after_final_marker(raw_output)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .or_else(|| raw_output.lines().rev().map(str::trim).find(|l| !l.is_empty()))
                .unwrap_or("");
            GoldAnswer::Choice {
                answer: answer.to_string(),
            }
        }
    }
}

fn after_final_marker(text: &str) -> Option<&str> {
    let lowered = text.to_lowercase();
    let pos = lowered.rfind("answer:")?;
    Some(&text[pos + "answer:".len()..])
}

// Word-boundary containment; underscores count as word characters so label
// tokens like "national_origin" stay atomic ("disgrace" must not match
// "race").
fn contains_word(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let is_word = |c: char| c.is_ascii_alphanumeric() || c == '_';
    let mut start = 0;
    while let Some(pos) = haystack[start..].find(needle) {
        let begin = start + pos;
        let end = begin + needle.len();
        let left_ok = begin == 0 || !haystack[..begin].chars().next_back().is_some_and(is_word);
        let right_ok =
            end == haystack.len() || !haystack[end..].chars().next().is_some_and(is_word);
        if left_ok && right_ok {
            return true;
        }
        start = begin + 1;
    }
    false
}

fn normalize_choice(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Grade one raw output against its gold answer under the task metric.
/// Semantic equivalence needs a gateway for the judge call.
pub fn score_sample(
    raw_output: &str,
    gold: &GoldAnswer,
    task: &TaskSpec,
    templates: &TemplateSet,
    gateway: Option<&Gateway>,
) -> Result<bool, EvalError> {
    match &task.metric {
        MetricKind::StrictSetAccuracy => {
            let GoldAnswer::LabelSet { labels: gold_labels } = gold else {
                return Err(EvalError::MetricMismatch {
                    metric: "strict_set_accuracy",
                    answer: "choice",
                });
            };
            match extract_prediction(raw_output, task) {
                GoldAnswer::LabelSet { labels } => Ok(&labels == gold_labels),
                GoldAnswer::Choice { .. } => unreachable!("multilabel extraction"),
            }
        }
        MetricKind::ExactChoice => {
            let GoldAnswer::Choice { answer } = gold else {
                return Err(EvalError::MetricMismatch {
                    metric: "exact_choice",
                    answer: "label_set",
                });
            };
            match extract_prediction(raw_output, task) {
                GoldAnswer::Choice { answer: predicted } => {
                    Ok(normalize_choice(&predicted) == normalize_choice(answer))
                }
                GoldAnswer::LabelSet { .. } => unreachable!("choice extraction"),
            }
        }
        MetricKind::SemanticEquivalence { judge_model } => {
            let gateway = gateway.expect("semantic equivalence requires a gateway");
            let bindings: BTreeMap<&str, String> = [
                ("gold", render_gold(gold)),
                ("prediction", raw_output.to_string()),
            ]
            .into_iter()
            .collect();
            let prompt = templates.render(JUDGE_TEMPLATE, &bindings)?;
            let judge = ModelSpec::new(judge_model.clone(), 0.0, 16);
            let request = CompletionRequest::user(&judge, prompt, Purpose::Judging);
            let response = gateway.complete(&request)?;
            parse_verdict(&response.text)
        }
    }
}

fn parse_verdict(output: &str) -> Result<bool, EvalError> {
    let lowered = output.to_lowercase();
    let Some(pos) = lowered.rfind("verdict:") else {
        return Err(EvalError::JudgeUnparseable {
            output: output.to_string(),
        });
    };
    let tail = lowered[pos + "verdict:".len()..].trim_start();
    if tail.starts_with("yes") {
        Ok(true)
    } else if tail.starts_with("no") {
        Ok(false)
    } else {
        Err(EvalError::JudgeUnparseable {
            output: output.to_string(),
        })
    }
}

/// Evaluate a candidate on a sample set: one prediction call per sample
/// (placeholder substituted with the sample input) plus judge calls when the
/// metric asks for them. Failed calls count as incorrect and are flagged;
/// more than 50% failures aborts the evaluation.
pub fn evaluate_prompt(
    candidate: &PromptCandidate,
    samples: &[Sample],
    target: &ModelSpec,
    task: &TaskSpec,
    templates: &TemplateSet,
    gateway: &Gateway,
) -> Result<EvalResult, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptySampleSet);
    }
    let requests: Vec<CompletionRequest> = samples
        .iter()
        .map(|sample| {
            CompletionRequest::user(
                target,
                candidate.text.replace(PLACEHOLDER, &sample.input),
                Purpose::Prediction,
            )
        })
        .collect();
    let responses = gateway.complete_batch(&requests);

    let mut llm_calls = samples.len() as u64;
    let mut failed = 0usize;
    let mut per_sample = Vec::with_capacity(samples.len());
    for (sample, response) in samples.iter().zip(responses) {
        match response {
            Ok(response) => {
                let judged = score_sample(&response.text, &sample.gold, task, templates, Some(gateway));
                if matches!(&task.metric, MetricKind::SemanticEquivalence { .. }) {
                    llm_calls += 1;
                }
                let correct = match judged {
                    Ok(v) => v,
                    // Unparseable judge output is conservatively incorrect.
                    Err(EvalError::JudgeUnparseable { .. }) => false,
                    Err(e) => return Err(e),
                };
                per_sample.push(SampleOutcome {
                    sample_id: sample.id.clone(),
                    correct,
                    raw_output: response.text,
                    failed: false,
                });
            }
            Err(_) => {
                failed += 1;
                per_sample.push(SampleOutcome {
                    sample_id: sample.id.clone(),
                    correct: false,
                    raw_output: String::new(),
                    failed: true,
                });
            }
        }
    }
    if failed * 2 > samples.len() {
        return Err(EvalError::TooManyFailures {
            failed,
            total: samples.len(),
        });
    }
    Ok(EvalResult {
        candidate_id: candidate.id,
        per_sample,
        llm_calls,
    })
}
