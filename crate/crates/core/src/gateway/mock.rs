//! Deterministic mock backend. The shipped [`SyntheticOracle`] gives the
//! optimizer a learnable landscape with a known optimum: prompts score by
//! the hidden keywords they contain, and the mock generator occasionally
//! injects a keyword, so evolved prompts genuinely improve.

use super::{request_seed, CompletionRequest, Purpose};
use crate::dataset::{render_gold, GoldAnswer, Sample, TaskSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Maps a request to a response text. Responses must be a pure function of
/// the request so mock runs are bit-reproducible.
pub trait MockOracle: Send + Sync {
    fn respond(&self, request: &CompletionRequest) -> String;
}

impl<F> MockOracle for F
where
    F: Fn(&CompletionRequest) -> String + Send + Sync,
{
    fn respond(&self, request: &CompletionRequest) -> String {
        self(request)
    }
}

fn default_keywords() -> Vec<String> {
    vec![
        "carefully".to_string(),
        "step by step".to_string(),
        "methodically".to_string(),
    ]
}

fn default_base_rate() -> f64 {
    0.2
}

fn default_increment() -> f64 {
    0.2
}

fn default_inject() -> f64 {
    0.5
}

/// Tuning knobs for the synthetic oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracleParams {
    /// Hidden keywords; each one present in a prompt raises the per-sample
    /// correctness probability by `keyword_increment`.
    #[serde(default = "default_keywords")]
    pub keywords: Vec<String>,
    #[serde(default = "default_base_rate")]
    pub base_rate: f64,
    #[serde(default = "default_increment")]
    pub keyword_increment: f64,
    /// Probability that a generation request injects a missing keyword.
    #[serde(default = "default_inject")]
    pub inject_probability: f64,
}

impl Default for SyntheticOracleParams {
    fn default() -> Self {
        Self {
            keywords: default_keywords(),
            base_rate: default_base_rate(),
            keyword_increment: default_increment(),
            inject_probability: default_inject(),
        }
    }
}

const FILLERS: &[&str] = &[
    "Provide clear reasoning.",
    "Respond concisely.",
    "Focus on the question asked.",
    "State your final answer plainly.",
    "Avoid unnecessary repetition.",
];

/// Deterministic stand-in for both LLM roles.
///
/// Predictions answer correctly with probability `base_rate +
/// keyword_increment * (keywords present in the rendered prompt)`, drawn
/// from a request-hash-seeded PRNG. Generations extract the last
/// `<prompt>...</prompt>` block from the meta-prompt and append either a
/// missing keyword or a neutral filler. Judging compares the `<gold>` and
/// `<prediction>` blocks after normalization.
pub struct SyntheticOracle {
    params: SyntheticOracleParams,
    gold: Vec<(String, GoldAnswer)>,
    fallback_label: String,
}

impl SyntheticOracle {
    pub fn new(params: SyntheticOracleParams) -> Self {
        Self {
            params,
            gold: Vec::new(),
            fallback_label: "mislabeled".to_string(),
        }
    }

    /// Oracle that knows the gold answers of `samples`, so it can answer
    /// prediction requests correctly or incorrectly on purpose.
    pub fn with_dataset(
        params: SyntheticOracleParams,
        samples: impl IntoIterator<Item = Sample>,
        task: &TaskSpec,
    ) -> Self {
        let fallback_label = task
            .vocabulary()
            .first()
            .cloned()
            .unwrap_or_else(|| "mislabeled".to_string());
        Self {
            params,
            gold: samples.into_iter().map(|s| (s.input, s.gold)).collect(),
            fallback_label,
        }
    }

    pub fn params(&self) -> &SyntheticOracleParams {
        &self.params
    }

    /// Best per-sample correctness probability any prompt can reach.
    pub fn optimum(&self) -> f64 {
        (self.params.base_rate
            + self.params.keyword_increment * self.params.keywords.len() as f64)
            .min(1.0)
    }

    fn keyword_count(&self, text: &str) -> usize {
        let lowered = text.to_lowercase();
        self.params
            .keywords
            .iter()
            .filter(|k| lowered.contains(&k.to_lowercase()))
            .count()
    }

    /// Correctness probability of the prompt rendered into `text`.
    pub fn correctness_probability(&self, text: &str) -> f64 {
        (self.params.base_rate
            + self.params.keyword_increment * self.keyword_count(text) as f64)
            .min(1.0)
    }

    fn respond_generation(&self, request: &CompletionRequest) -> String {
        let text = request.flat_text();
        let base = extract_tagged(&text, "prompt")
            .map(str::to_string)
            .unwrap_or_else(|| "Answer the question: {input}".to_string());
        let mut rng = ChaCha8Rng::seed_from_u64(request_seed(request));
        let missing: Vec<&String> = {
            let lowered = base.to_lowercase();
            self.params
                .keywords
                .iter()
                .filter(|k| !lowered.contains(&k.to_lowercase()))
                .collect()
        };
        if !missing.is_empty() && rng.gen::<f64>() < self.params.inject_probability {
            let keyword = missing[rng.gen_range(0..missing.len())];
            format!("{base}\nWork {keyword} through the task before answering.")
        } else {
            let filler = FILLERS[rng.gen_range(0..FILLERS.len())];
            format!("{base}\n{filler}")
        }
    }

    fn respond_prediction(&self, request: &CompletionRequest) -> String {
        let text = request.flat_text();
        // The queried sample is the earliest dataset input occurring in the
        // rendered prompt; few-shot example blocks come later in the text.
        let mut matched: Option<(usize, &GoldAnswer, usize)> = None;
        for (input, gold) in &self.gold {
            if let Some(pos) = text.find(input.as_str()) {
                let better = match matched {
                    None => true,
                    Some((best_pos, _, best_len)) => {
                        pos < best_pos || (pos == best_pos && input.len() > best_len)
                    }
                };
                if better {
                    matched = Some((pos, gold, input.len()));
                }
            }
        }
        let Some((_, gold, _)) = matched else {
            return "ANSWER: unknown".to_string();
        };
        let p = self.correctness_probability(&text);
        let mut rng = ChaCha8Rng::seed_from_u64(request_seed(request));
        if rng.gen::<f64>() < p {
            format!("ANSWER: {}", render_gold(gold))
        } else {
            format!("ANSWER: {}", render_gold(&self.corrupt(gold)))
        }
    }

    fn corrupt(&self, gold: &GoldAnswer) -> GoldAnswer {
        match gold {
            GoldAnswer::LabelSet { labels } => {
                let mut labels = labels.clone();
                match labels.iter().next().cloned() {
                    Some(first) => {
                        labels.remove(&first);
                    }
                    None => {
                        labels.insert(self.fallback_label.clone());
                    }
                }
                GoldAnswer::LabelSet { labels }
            }
            GoldAnswer::Choice { answer } => {
                let wrong = if answer.trim().eq_ignore_ascii_case("a") {
                    "B"
                } else {
                    "A"
                };
                GoldAnswer::Choice {
                    answer: wrong.to_string(),
                }
            }
        }
    }

    fn respond_judging(&self, request: &CompletionRequest) -> String {
        let text = request.flat_text();
        let gold = extract_tagged(&text, "gold").unwrap_or_default();
        let prediction = extract_tagged(&text, "prediction").unwrap_or_default();
        let gold_norm = normalize(gold);
        let pred_norm = normalize(prediction);
        if !gold_norm.is_empty() && (pred_norm == gold_norm || pred_norm.contains(&gold_norm)) {
            "VERDICT: YES".to_string()
        } else {
            "VERDICT: NO".to_string()
        }
    }
}

impl MockOracle for SyntheticOracle {
    fn respond(&self, request: &CompletionRequest) -> String {
        match request.purpose {
            Purpose::Generation => self.respond_generation(request),
            Purpose::Prediction => self.respond_prediction(request),
            Purpose::Judging => self.respond_judging(request),
        }
    }
}

/// Contents of the last `<tag>...</tag>` block, trimmed.
pub fn extract_tagged<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.rfind(&open)? + open.len();
    let end = text[start..].find(&close)? + start;
    Some(text[start..end].trim())
}

fn normalize(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Test oracle assigning each prompt a fixed correctness probability by
/// looking it up among the configured (fragment, probability) pairs.
pub struct BernoulliOracle {
    arms: Vec<(String, f64)>,
    default_p: f64,
    gold: Vec<(String, GoldAnswer)>,
    fallback_label: String,
}

impl BernoulliOracle {
    pub fn new(
        arms: Vec<(String, f64)>,
        default_p: f64,
        samples: impl IntoIterator<Item = Sample>,
    ) -> Self {
        Self {
            arms,
            default_p,
            gold: samples.into_iter().map(|s| (s.input, s.gold)).collect(),
            fallback_label: "mislabeled".to_string(),
        }
    }
}

impl MockOracle for BernoulliOracle {
    fn respond(&self, request: &CompletionRequest) -> String {
        let text = request.flat_text();
        let p = self
            .arms
            .iter()
            .find(|(fragment, _)| text.contains(fragment))
            .map(|(_, p)| *p)
            .unwrap_or(self.default_p);
        let gold = self
            .gold
            .iter()
            .filter_map(|(input, gold)| text.find(input.as_str()).map(|pos| (pos, gold)))
            .min_by_key(|(pos, _)| *pos)
            .map(|(_, gold)| gold);
        let Some(gold) = gold else {
            return "ANSWER: unknown".to_string();
        };
        let mut rng = ChaCha8Rng::seed_from_u64(request_seed(request));
        if rng.gen::<f64>() < p {
            format!("ANSWER: {}", render_gold(gold))
        } else {
            let corrupted = match gold {
                GoldAnswer::LabelSet { labels } => {
                    let mut labels = labels.clone();
                    match labels.iter().next().cloned() {
                        Some(first) => {
                            labels.remove(&first);
                        }
                        None => {
                            labels.insert(self.fallback_label.clone());
                        }
                    }
                    GoldAnswer::LabelSet { labels }
                }
                GoldAnswer::Choice { answer } => GoldAnswer::Choice {
                    answer: if answer.trim().eq_ignore_ascii_case("a") {
                        "B".into()
                    } else {
                        "A".into()
                    },
                },
            };
            format!("ANSWER: {}", render_gold(&corrupted))
        }
    }
}

/// Test oracle: always answers with the gold rendering.
pub struct AllCorrectOracle {
    gold: Vec<(String, GoldAnswer)>,
}

impl AllCorrectOracle {
    pub fn new(samples: impl IntoIterator<Item = Sample>) -> Self {
        Self {
            gold: samples.into_iter().map(|s| (s.input, s.gold)).collect(),
        }
    }
}

impl MockOracle for AllCorrectOracle {
    fn respond(&self, request: &CompletionRequest) -> String {
        let text = request.flat_text();
        self.gold
            .iter()
            .filter_map(|(input, gold)| text.find(input.as_str()).map(|pos| (pos, gold)))
            .min_by_key(|(pos, _)| *pos)
            .map(|(_, gold)| format!("ANSWER: {}", render_gold(gold)))
            .unwrap_or_else(|| "ANSWER: unknown".to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::AnswerMode;
    use crate::domain::MetricKind;
    use crate::gateway::ModelSpec;

    fn task() -> TaskSpec {
        TaskSpec {
            name: "synthetic".into(),
            answer_mode: AnswerMode::Multilabel,
            label_vocabulary: Some(vec!["alpha".into(), "beta".into(), "gamma".into()]),
            metric: MetricKind::StrictSetAccuracy,
        }
    }

    fn samples(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                id: format!("s{i}"),
                input: format!("Sample input #{i:04} about topic {}.", i % 7),
                gold: GoldAnswer::label_set(if i % 3 == 0 {
                    vec!["alpha"]
                } else {
                    vec!["beta"]
                }),
            })
            .collect()
    }

    fn prediction_request(prompt: &str, input: &str) -> CompletionRequest {
        CompletionRequest::user(
            &ModelSpec::target_default(),
            prompt.replace("{input}", input),
            Purpose::Prediction,
        )
    }

    #[test]
    fn optimum_reflects_keyword_budget() {
        let oracle = SyntheticOracle::new(SyntheticOracleParams::default());
        assert!((oracle.optimum() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn prediction_rate_tracks_keywords() {
        let all = samples(200);
        let oracle =
            SyntheticOracle::with_dataset(SyntheticOracleParams::default(), all.clone(), &task());
        let count_correct = |prompt: &str| {
            all.iter()
                .filter(|s| {
                    let request = prediction_request(prompt, &s.input);
                    oracle.respond(&request) == format!("ANSWER: {}", render_gold(&s.gold))
                })
                .count() as f64
                / all.len() as f64
        };
        let bare = count_correct("Classify: {input}");
        let loaded =
            count_correct("Classify carefully, step by step and methodically: {input}");
        // Base rate 0.2 vs optimum 0.8, each measured over 200 draws.
        assert!(bare < 0.35, "bare prompt rate {bare}");
        assert!(loaded > 0.65, "loaded prompt rate {loaded}");
    }

    #[test]
    fn prediction_prefers_earliest_input_match() {
        let all = samples(4);
        let oracle = SyntheticOracle::with_dataset(
            SyntheticOracleParams {
                base_rate: 1.0,
                keyword_increment: 0.0,
                ..Default::default()
            },
            all.clone(),
            &task(),
        );
        // Queried sample 1 first, few-shot example with sample 2 appended.
        let prompt = format!(
            "Classify: {}\n\nExamples:\nInput: {}\nOutput: beta",
            all[1].input, all[2].input
        );
        let request = CompletionRequest::user(
            &ModelSpec::target_default(),
            prompt,
            Purpose::Prediction,
        );
        assert_eq!(
            oracle.respond(&request),
            format!("ANSWER: {}", render_gold(&all[1].gold))
        );
    }

    #[test]
    fn generation_extracts_last_prompt_block() {
        let oracle = SyntheticOracle::new(SyntheticOracleParams {
            inject_probability: 0.0,
            ..Default::default()
        });
        let request = CompletionRequest::user(
            &ModelSpec::generator_default(),
            "Rewrite this.\n<prompt>\nClassify: {input}\n</prompt>\nRespond with the prompt.",
            Purpose::Generation,
        );
        let out = oracle.respond(&request);
        assert!(out.starts_with("Classify: {input}"));
        assert!(FILLERS.iter().any(|f| out.contains(f)));
    }

    #[test]
    fn generation_injects_missing_keywords_at_rate() {
        let oracle = SyntheticOracle::new(SyntheticOracleParams {
            inject_probability: 1.0,
            ..Default::default()
        });
        let request = CompletionRequest::user(
            &ModelSpec::generator_default(),
            "<prompt>\nClassify: {input}\n</prompt>",
            Purpose::Generation,
        );
        let out = oracle.respond(&request);
        assert_eq!(oracle.keyword_count(&out), 1);
        // Same request twice gives byte-identical output.
        assert_eq!(out, oracle.respond(&request));
    }

    #[test]
    fn judging_normalizes_before_comparing() {
        let oracle = SyntheticOracle::new(SyntheticOracleParams::default());
        let request = |gold: &str, prediction: &str| {
            CompletionRequest::user(
                &ModelSpec::target_default(),
                format!("<gold>\n{gold}\n</gold>\n<prediction>\n{prediction}\n</prediction>"),
                Purpose::Judging,
            )
        };
        assert_eq!(oracle.respond(&request("B", "  b ")), "VERDICT: YES");
        assert_eq!(
            oracle.respond(&request("B) 42", "the answer is b) 42")),
            "VERDICT: YES"
        );
        assert_eq!(oracle.respond(&request("B", "C")), "VERDICT: NO");
    }

    #[test]
    fn extract_tagged_takes_last_block() {
        let text = "<prompt>first</prompt> middle <prompt>second</prompt>";
        assert_eq!(extract_tagged(text, "prompt"), Some("second"));
        assert_eq!(extract_tagged("no tags", "prompt"), None);
    }
}
