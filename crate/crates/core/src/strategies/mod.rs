//! The five candidate-generation strategies: random mutation, midpoint
//! crossover, few-shot augmentation, error-driven rewriting (APO) and
//! trajectory-driven rewriting (OPRO).

use crate::dataset::{render_gold, GoldAnswer, Sample, TaskSpec};
use crate::domain::{
    child_generation, new_candidate, Accuracy, DomainError, IdAllocator, Lineage, MutationKind,
    PromptCandidate, PLACEHOLDER,
};
use crate::evaluation::{evaluate_prompt, extract_prediction, EvalError};
use crate::gateway::{CompletionRequest, Gateway, GatewayError, ModelSpec, Purpose};
use crate::templates::{
    mutation_template_id, TemplateError, TemplateSet, APO_EDIT_TEMPLATE, APO_GRADIENT_TEMPLATE,
    OPRO_TEMPLATE,
};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("generator returned empty text {attempts} times")]
    GenerationFailed { attempts: u32 },
    #[error("crossover parents must be distinct")]
    IdenticalParents,
    #[error("few-shot augmentation needs at least one training sample")]
    EmptyTrainSet,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("invalid strategy parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Everything a strategy invocation needs besides its own parameters.
/// Parents are sorted descending by validation score.
pub struct StrategyContext<'a> {
    pub parents: &'a [(PromptCandidate, Accuracy)],
    pub train: &'a [Sample],
    pub generation: u64,
    pub seed: u64,
    pub generator: &'a ModelSpec,
}

impl StrategyContext<'_> {
    fn parent(&self, i: usize) -> &PromptCandidate {
        &self.parents[i % self.parents.len()].0
    }
}

/// A misprediction collected while probing a prompt on training samples.
#[derive(Debug, Clone)]
pub struct ErrorCase {
    pub sample: Sample,
    pub predicted: GoldAnswer,
    pub raw_output: String,
}

/// Best-first list of (prompt, score) pairs feeding the OPRO meta-prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    entries: Vec<TrajectoryEntry>,
    max_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub candidate_id: crate::domain::CandidateId,
    pub text: String,
    pub score: Accuracy,
    pub generation: u64,
}

impl Trajectory {
    pub fn new(max_length: usize) -> Self {
        Self {
            entries: Vec::new(),
            max_length: max_length.max(1),
        }
    }

    /// Insert keeping the list best-first and bounded; an entry already
    /// present keeps its better score.
    pub fn push(&mut self, entry: TrajectoryEntry) {
        if let Some(existing) = self
            .entries
            .iter_mut()
            .find(|e| e.candidate_id == entry.candidate_id)
        {
            if entry.score > existing.score {
                *existing = entry;
            }
        } else {
            self.entries.push(entry);
        }
        self.entries.sort_by(|a, b| {
            b.score
                .cmp(&a.score)
                .then(a.candidate_id.cmp(&b.candidate_id))
        });
        self.entries.truncate(self.max_length);
    }

    pub fn best(&self) -> Option<&TrajectoryEntry> {
        self.entries.first()
    }

    pub fn entries(&self) -> &[TrajectoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Normalize a generated text to contain the placeholder exactly once:
/// absent placeholders are appended, surplus occurrences are removed.
pub fn repair_placeholder(text: &str) -> String {
    let trimmed = text.trim();
    match crate::domain::placeholder_count(trimmed) {
        0 => format!("{trimmed}\n\nInput: {PLACEHOLDER}"),
        1 => trimmed.to_string(),
        _ => {
            let mut out = String::with_capacity(trimmed.len());
            let mut first = true;
            let mut rest = trimmed;
            while let Some(pos) = rest.find(PLACEHOLDER) {
                out.push_str(&rest[..pos]);
                if first {
                    out.push_str(PLACEHOLDER);
                    first = false;
                }
                rest = &rest[pos + PLACEHOLDER.len()..];
            }
            out.push_str(rest);
            out
        }
    }
}

fn bind<'a>(pairs: &[(&'a str, String)]) -> BTreeMap<&'a str, String> {
    pairs.iter().cloned().collect()
}

// One retry on empty output, then GenerationFailed.
fn generate_text(
    gateway: &Gateway,
    generator: &ModelSpec,
    prompt: &str,
) -> Result<String, StrategyError> {
    let request = CompletionRequest::user(generator, prompt, Purpose::Generation);
    for attempt in 1..=2u32 {
        let response = gateway.complete(&request)?;
        let text = response.text.trim().to_string();
        if !text.is_empty() {
            return Ok(text);
        }
        if attempt == 2 {
            return Err(StrategyError::GenerationFailed { attempts: 2 });
        }
    }
    unreachable!()
}

/// Uniform draw over the eight mutation kinds.
pub fn pick_mutation_kind(rng: &mut impl Rng) -> MutationKind {
    MutationKind::ALL[rng.gen_range(0..MutationKind::ALL.len())]
}

/// Ask the generator LLM to rewrite the parent under a kind-specific
/// meta-prompt. The placeholder is re-inserted if the LLM dropped it.
pub fn mutate(
    ctx: &StrategyContext,
    parent: &PromptCandidate,
    kind: MutationKind,
    templates: &TemplateSet,
    gateway: &Gateway,
    ids: &IdAllocator,
) -> Result<PromptCandidate, StrategyError> {
    let prompt = templates.render(
        &mutation_template_id(kind),
        &bind(&[("parent", parent.text.clone())]),
    )?;
    let text = generate_text(gateway, ctx.generator, &prompt)?;
    let child = new_candidate(
        ids,
        repair_placeholder(&text),
        Lineage::mutated(parent.id, kind),
        child_generation(ctx.generation, &[parent.generation]),
    )?;
    Ok(child)
}

/// Midpoint crossover on whitespace tokens: the first `ceil(n/2)` tokens of
/// one parent joined with the trailing half of the other. No LLM call.
pub fn crossover(
    ctx: &StrategyContext,
    parent_a: &PromptCandidate,
    parent_b: &PromptCandidate,
    ids: &IdAllocator,
) -> Result<PromptCandidate, StrategyError> {
    if parent_a.id == parent_b.id {
        return Err(StrategyError::IdenticalParents);
    }
    let tokens_a: Vec<&str> = parent_a.text.split_whitespace().collect();
    let tokens_b: Vec<&str> = parent_b.text.split_whitespace().collect();
    let head_len = tokens_a.len().div_ceil(2);
    let tail_start = tokens_b.len().div_ceil(2);
    let combined: Vec<&str> = tokens_a[..head_len]
        .iter()
        .chain(tokens_b[tail_start..].iter())
        .copied()
        .collect();
    let child = new_candidate(
        ids,
        repair_placeholder(&combined.join(" ")),
        Lineage::crossover(parent_a.id, parent_b.id),
        child_generation(ctx.generation, &[parent_a.generation, parent_b.generation]),
    )?;
    Ok(child)
}

/// Append one to three labeled training examples to the parent prompt as a
/// structured block. No LLM call.
pub fn few_shot_augment(
    ctx: &StrategyContext,
    parent: &PromptCandidate,
    seed: u64,
    ids: &IdAllocator,
) -> Result<PromptCandidate, StrategyError> {
    if ctx.train.is_empty() {
        return Err(StrategyError::EmptyTrainSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..=3usize).min(ctx.train.len());
    let chosen = index::sample(&mut rng, ctx.train.len(), k);
    let mut block = String::from("\n\nExamples:");
    for i in chosen.iter() {
        let sample = &ctx.train[i];
        block.push_str(&format!(
            "\nInput: {}\nOutput: {}",
            sample.input,
            render_gold(&sample.gold)
        ));
    }
    let child = new_candidate(
        ids,
        repair_placeholder(&format!("{}{}", parent.text, block)),
        Lineage::few_shot(parent.id),
        child_generation(ctx.generation, &[parent.generation]),
    )?;
    Ok(child)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApoConfig {
    /// Training samples each parent is probed on while collecting errors.
    pub train_subsample: usize,
    /// Errors quoted in one gradient meta-prompt.
    pub error_sample: usize,
}

impl Default for ApoConfig {
    fn default() -> Self {
        Self {
            train_subsample: 25,
            error_sample: 4,
        }
    }
}

/// Error-driven rewriting. Each parent is probed once on a training
/// subsample (at most `train_subsample` target calls); each child then costs
/// exactly two generator calls: one gradient diagnosis, one edit.
/// Parents without errors fall back to a plain mutation, which the lineage
/// records as such.
#[allow(clippy::too_many_arguments)]
pub fn apo_generate(
    ctx: &StrategyContext,
    templates: &TemplateSet,
    target: &ModelSpec,
    task: &TaskSpec,
    gateway: &Gateway,
    count: usize,
    config: &ApoConfig,
    ids: &IdAllocator,
) -> Result<Vec<PromptCandidate>, StrategyError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if ctx.train.is_empty() {
        return Err(StrategyError::EmptyTrainSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut errors_by_parent: BTreeMap<usize, Vec<ErrorCase>> = BTreeMap::new();
    let mut children = Vec::with_capacity(count);

    for child_index in 0..count {
        let parent_slot = child_index % ctx.parents.len();
        let parent = ctx.parent(parent_slot);
        let errors = match errors_by_parent.entry(parent_slot) {
            std::collections::btree_map::Entry::Occupied(entry) => entry.into_mut(),
            std::collections::btree_map::Entry::Vacant(entry) => entry.insert(collect_errors(
                ctx, parent, target, task, templates, gateway, config, &mut rng,
            )?),
        };

        if errors.is_empty() {
            // Nothing to diagnose; emit a mutation instead.
            let kind = pick_mutation_kind(&mut rng);
            children.push(mutate(ctx, parent, kind, templates, gateway, ids)?);
            continue;
        }

        let picked = index::sample(&mut rng, errors.len(), errors.len().min(config.error_sample));
        let transcripts: Vec<String> = picked
            .iter()
            .map(|i| {
                let case = &errors[i];
                format!(
                    "Input: {}\nExpected: {}\nModel output: {}",
                    case.sample.input,
                    render_gold(&case.sample.gold),
                    case.raw_output.trim()
                )
            })
            .collect();
        let gradient_prompt = templates.render(
            APO_GRADIENT_TEMPLATE,
            &bind(&[
                ("parent", parent.text.clone()),
                ("errors", transcripts.join("\n\n")),
            ]),
        )?;
        let gradient = generate_text(gateway, ctx.generator, &gradient_prompt)?;
        let edit_prompt = templates.render(
            APO_EDIT_TEMPLATE,
            &bind(&[("parent", parent.text.clone()), ("gradient", gradient)]),
        )?;
        let revised = generate_text(gateway, ctx.generator, &edit_prompt)?;
        children.push(new_candidate(
            ids,
            repair_placeholder(&revised),
            Lineage::apo(parent.id),
            child_generation(ctx.generation, &[parent.generation]),
        )?);
    }
    Ok(children)
}

#[allow(clippy::too_many_arguments)]
fn collect_errors(
    ctx: &StrategyContext,
    parent: &PromptCandidate,
    target: &ModelSpec,
    task: &TaskSpec,
    templates: &TemplateSet,
    gateway: &Gateway,
    config: &ApoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ErrorCase>, StrategyError> {
    let subsample_len = config.train_subsample.min(ctx.train.len()).max(1);
    let subsample: Vec<Sample> = index::sample(rng, ctx.train.len(), subsample_len)
        .iter()
        .map(|i| ctx.train[i].clone())
        .collect();
    let result = evaluate_prompt(parent, &subsample, target, task, templates, gateway)?;
    Ok(result
        .per_sample
        .iter()
        .zip(&subsample)
        .filter(|(outcome, _)| !outcome.correct && !outcome.failed)
        .map(|(outcome, sample)| ErrorCase {
            sample: sample.clone(),
            predicted: extract_prediction(&outcome.raw_output, task),
            raw_output: outcome.raw_output.clone(),
        })
        .collect())
}

/// Trajectory-driven rewriting. Each child renders a meta-prompt over the
/// trajectory with per-entry dropout (always retaining at least the best
/// entry), listed worst-to-best, and asks the generator for a better prompt.
#[allow(clippy::too_many_arguments)]
pub fn opro_generate(
    ctx: &StrategyContext,
    trajectory: &Trajectory,
    templates: &TemplateSet,
    gateway: &Gateway,
    count: usize,
    dropout_p: f64,
    ids: &IdAllocator,
) -> Result<Vec<PromptCandidate>, StrategyError> {
    if trajectory.is_empty() {
        return Err(StrategyError::EmptyTrajectory);
    }
    if !(0.0..1.0).contains(&dropout_p) {
        return Err(StrategyError::InvalidParam(format!(
            "dropout_p must lie in [0,1), got {dropout_p}"
        )));
    }
    let best = trajectory.best().expect("non-empty trajectory");
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut children = Vec::with_capacity(count);
    for _ in 0..count {
        let retained = render_trajectory(trajectory, dropout_p, &mut rng);
        let prompt = templates.render(OPRO_TEMPLATE, &bind(&[("trajectory", retained)]))?;
        let text = generate_text(gateway, ctx.generator, &prompt)?;
        children.push(new_candidate(
            ids,
            repair_placeholder(&text),
            Lineage::opro(best.candidate_id),
            child_generation(ctx.generation, &[best.generation]),
        )?);
    }
    Ok(children)
}

/// Apply dropout and render the surviving entries worst-to-best.
pub fn render_trajectory(
    trajectory: &Trajectory,
    dropout_p: f64,
    rng: &mut impl Rng,
) -> String {
    let mut retained: Vec<&TrajectoryEntry> = trajectory
        .entries()
        .iter()
        .filter(|_| rng.gen::<f64>() >= dropout_p)
        .collect();
    if retained.is_empty() {
        retained.push(trajectory.best().expect("non-empty trajectory"));
    }
    retained
        .iter()
        .rev()
        .map(|entry| {
            format!(
                "Score {:.2}:\n<prompt>\n{}\n</prompt>",
                entry.score.value(),
                entry.text
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::AnswerMode;
    use crate::domain::{CandidateId, MetricKind, StrategyKind};
    use crate::gateway::mock::AllCorrectOracle;
    use crate::gateway::SyntheticOracle;
    use crate::gateway::SyntheticOracleParams;
    use std::sync::Arc;

    fn task() -> TaskSpec {
        TaskSpec {
            name: "synthetic".into(),
            answer_mode: AnswerMode::Multilabel,
            label_vocabulary: Some(vec!["alpha".into(), "beta".into()]),
            metric: MetricKind::StrictSetAccuracy,
        }
    }

    fn train(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                id: format!("t{i}"),
                input: format!("training item {i:03}"),
                gold: GoldAnswer::label_set(["alpha"]),
            })
            .collect()
    }

    fn seed_parent(ids: &IdAllocator, text: &str) -> (PromptCandidate, Accuracy) {
        (
            new_candidate(ids, text, Lineage::seed(), 0).unwrap(),
            Accuracy::new(10, 50),
        )
    }

    fn context<'a>(
        parents: &'a [(PromptCandidate, Accuracy)],
        train: &'a [Sample],
        generator: &'a ModelSpec,
        seed: u64,
    ) -> StrategyContext<'a> {
        StrategyContext {
            parents,
            train,
            generation: 1,
            seed,
            generator,
        }
    }

    fn echo_gateway() -> Gateway {
        // Echoes back the parent prompt found in the meta-prompt.
        Gateway::mock(Arc::new(|request: &CompletionRequest| {
            crate::gateway::mock::extract_tagged(&request.flat_text(), "prompt")
                .unwrap_or("fallback {input}")
                .to_string()
        }))
    }

    #[test]
    fn pick_mutation_kind_is_deterministic_per_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(0);
        let mut b = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(pick_mutation_kind(&mut a), pick_mutation_kind(&mut b));
    }

    #[test]
    fn pick_mutation_kind_is_roughly_uniform() {
        // Binomial bound: 8000 draws, p = 1/8, mean 1000, 3 sigma ~ 89.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = BTreeMap::new();
        for _ in 0..8000 {
            *counts.entry(pick_mutation_kind(&mut rng)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 8);
        for (kind, count) in counts {
            assert!(
                (850..=1150).contains(&count),
                "{kind} drawn {count} times, outside [850, 1150]"
            );
        }
    }

    #[test]
    fn mutate_uses_template_and_repairs_placeholder() {
        let ids = IdAllocator::new();
        let parents = vec![seed_parent(&ids, "Answer this math problem: {input}")];
        let generator = ModelSpec::generator_default();
        let ctx = context(&parents, &[], &generator, 0);
        // Annex-style oracle: the concise rewrite of the original prompt.
        let gateway = Gateway::mock(Arc::new(|_: &CompletionRequest| "Solve: {input}".to_string()));
        let child = mutate(
            &ctx,
            &parents[0].0,
            MutationKind::ConciseOptimization,
            &TemplateSet::builtin(),
            &gateway,
            &ids,
        )
        .unwrap();
        assert_eq!(child.text, "Solve: {input}");
        assert_eq!(child.lineage.strategy, StrategyKind::Mutator);
        assert_eq!(
            child.lineage.mutation_subtype,
            Some(MutationKind::ConciseOptimization)
        );
        assert_eq!(child.generation, 1);

        // A generator that drops the placeholder gets repaired.
        let dropping = Gateway::mock(Arc::new(|_: &CompletionRequest| "Solve it.".to_string()));
        let repaired = mutate(
            &ctx,
            &parents[0].0,
            MutationKind::ConciseOptimization,
            &TemplateSet::builtin(),
            &dropping,
            &ids,
        )
        .unwrap();
        assert_eq!(repaired.text, format!("Solve it.\n\nInput: {PLACEHOLDER}"));
    }

    #[test]
    fn mutate_echo_produces_new_candidate_with_same_text() {
        let ids = IdAllocator::new();
        let parents = vec![seed_parent(&ids, "Classify: {input}")];
        let generator = ModelSpec::generator_default();
        let ctx = context(&parents, &[], &generator, 0);
        let gateway = echo_gateway();
        let child = mutate(
            &ctx,
            &parents[0].0,
            MutationKind::ExpertPersona,
            &TemplateSet::builtin(),
            &gateway,
            &ids,
        )
        .unwrap();
        assert_eq!(child.text, parents[0].0.text);
        assert_ne!(child.id, parents[0].0.id);
    }

    #[test]
    fn mutate_fails_after_two_empty_responses() {
        let ids = IdAllocator::new();
        let parents = vec![seed_parent(&ids, "Classify: {input}")];
        let generator = ModelSpec::generator_default();
        let ctx = context(&parents, &[], &generator, 0);
        let gateway = Gateway::mock(Arc::new(|_: &CompletionRequest| "  ".to_string()));
        let err = mutate(
            &ctx,
            &parents[0].0,
            MutationKind::ExpertPersona,
            &TemplateSet::builtin(),
            &gateway,
            &ids,
        )
        .unwrap_err();
        assert!(matches!(err, StrategyError::GenerationFailed { attempts: 2 }));
    }

    #[test]
    fn crossover_splits_at_token_midpoints() {
        let ids = IdAllocator::new();
        let ctx_parents = vec![
            seed_parent(&ids, "A B {input} D"),
            seed_parent(&ids, "W X Y {input}"),
        ];
        let generator = ModelSpec::generator_default();
        let ctx = context(&ctx_parents, &[], &generator, 0);
        let child = crossover(&ctx, &ctx_parents[0].0, &ctx_parents[1].0, &ids).unwrap();
        // "A B" + "Y {input}"
        assert_eq!(child.text, "A B Y {input}");
        assert_eq!(child.lineage.strategy, StrategyKind::Crossover);
        assert_eq!(child.lineage.parent_ids.len(), 2);
    }

    #[test]
    fn crossover_odd_token_count_splits_at_ceiling() {
        // Hand-traced: "A B C" x "W X Y Z" keeps "A B" (ceil(3/2)=2 tokens)
        // and "Y Z" (tokens after ceil(4/2)=2), so the child is "A B Y Z"
        // plus the repaired placeholder.
        let ids = IdAllocator::new();
        let a = new_candidate(&ids, "A B {input}", Lineage::seed(), 0).unwrap();
        let b = new_candidate(&ids, "W X Y {input}", Lineage::seed(), 0).unwrap();
        let parents = vec![
            (a.clone(), Accuracy::new(1, 2)),
            (b.clone(), Accuracy::new(1, 2)),
        ];
        let generator = ModelSpec::generator_default();
        let ctx = context(&parents, &[], &generator, 0);
        let child = crossover(&ctx, &a, &b, &ids).unwrap();
        assert_eq!(child.text, "A B Y {input}");
    }

    #[test]
    fn crossover_repairs_duplicate_and_missing_placeholders() {
        let ids = IdAllocator::new();
        let parents = vec![
            seed_parent(&ids, "{input} tail of a longer prompt body"),
            seed_parent(&ids, "start of prompt body then {input}"),
        ];
        let generator = ModelSpec::generator_default();
        let ctx = context(&parents, &[], &generator, 0);
        // First halves of A contain {input}, second half of B contains it
        // too: repair keeps only the first.
        let child = crossover(&ctx, &parents[0].0, &parents[1].0, &ids).unwrap();
        assert_eq!(crate::domain::placeholder_count(&child.text), 1);
        // Reversed order: neither half has it, repair appends.
        let child2 = crossover(&ctx, &parents[1].0, &parents[0].0, &ids).unwrap();
        assert_eq!(crate::domain::placeholder_count(&child2.text), 1);
    }

    #[test]
    fn crossover_rejects_identical_parents() {
        let ids = IdAllocator::new();
        let parents = vec![seed_parent(&ids, "A {input}")];
        let generator = ModelSpec::generator_default();
        let ctx = context(&parents, &[], &generator, 0);
        let err = crossover(&ctx, &parents[0].0, &parents[0].0, &ids).unwrap_err();
        assert!(matches!(err, StrategyError::IdenticalParents));
    }

    #[test]
    fn crossover_generation_exceeds_both_parents() {
        let ids = IdAllocator::new();
        let a = new_candidate(&ids, "alpha text {input}", Lineage::seed(), 3).unwrap();
        let b = new_candidate(&ids, "beta body {input}", Lineage::seed(), 5).unwrap();
        let parents = vec![
            (a.clone(), Accuracy::new(1, 2)),
            (b.clone(), Accuracy::new(1, 2)),
        ];
        let generator = ModelSpec::generator_default();
        let mut ctx = context(&parents, &[], &generator, 0);
        ctx.generation = 0;
        let child = crossover(&ctx, &a, &b, &ids).unwrap();
        assert_eq!(child.generation, 6);
    }

    #[test]
    fn few_shot_appends_one_to_three_examples() {
        let ids = IdAllocator::new();
        let parents = vec![seed_parent(&ids, "Classify: {input}")];
        let generator = ModelSpec::generator_default();
        let train_set = train(50);
        let ctx = context(&parents, &train_set, &generator, 0);
        for seed in 0..20u64 {
            let child = few_shot_augment(&ctx, &parents[0].0, seed, &ids).unwrap();
            assert!(child.text.starts_with("Classify: {input}"));
            assert!(child.text.contains("\n\nExamples:"));
            let examples = child.text.matches("Input: ").count();
            assert!((1..=3).contains(&examples), "{examples} examples");
            assert_eq!(child.text.matches("Output: ").count(), examples);
            assert_eq!(child.lineage.strategy, StrategyKind::FewShot);
        }
    }

    #[test]
    fn few_shot_clamps_to_available_samples() {
        let ids = IdAllocator::new();
        let parents = vec![seed_parent(&ids, "Classify: {input}")];
        let generator = ModelSpec::generator_default();
        let train_set = train(1);
        let ctx = context(&parents, &train_set, &generator, 0);
        for seed in 0..10u64 {
            let child = few_shot_augment(&ctx, &parents[0].0, seed, &ids).unwrap();
            assert_eq!(child.text.matches("Input: ").count(), 1);
        }
    }

    #[test]
    fn few_shot_is_deterministic_per_seed_and_rejects_empty_train() {
        let ids = IdAllocator::new();
        let parents = vec![seed_parent(&ids, "Classify: {input}")];
        let generator = ModelSpec::generator_default();
        let train_set = train(10);
        let ctx = context(&parents, &train_set, &generator, 0);
        let a = few_shot_augment(&ctx, &parents[0].0, 9, &ids).unwrap();
        let b = few_shot_augment(&ctx, &parents[0].0, 9, &ids).unwrap();
        assert_eq!(a.text, b.text);

        let empty_ctx = context(&parents, &[], &generator, 0);
        assert!(matches!(
            few_shot_augment(&empty_ctx, &parents[0].0, 0, &ids),
            Err(StrategyError::EmptyTrainSet)
        ));
    }

    #[test]
    fn apo_counts_two_generator_calls_per_child() {
        let ids = IdAllocator::new();
        let parents = vec![
            seed_parent(&ids, "Classify: {input}"),
            seed_parent(&ids, "Sort out: {input}"),
        ];
        let generator = ModelSpec::generator_default();
        let target = ModelSpec::target_default();
        let train_set = train(50);
        let ctx = context(&parents, &train_set, &generator, 7);
        let task = task();
        // Low base rate guarantees errors to diagnose.
        let oracle = SyntheticOracle::with_dataset(
            SyntheticOracleParams {
                base_rate: 0.3,
                keyword_increment: 0.0,
                ..Default::default()
            },
            train_set.clone(),
            &task,
        );
        let gateway = Gateway::mock(Arc::new(oracle));
        let children = apo_generate(
            &ctx,
            &TemplateSet::builtin(),
            &target,
            &task,
            &gateway,
            4,
            &ApoConfig::default(),
            &ids,
        )
        .unwrap();
        assert_eq!(children.len(), 4);
        for child in &children {
            assert_eq!(child.lineage.strategy, StrategyKind::Apo);
        }
        assert_eq!(gateway.ledger().requests(Purpose::Generation), 8);
        // One 25-sample probe per parent.
        assert_eq!(gateway.ledger().requests(Purpose::Prediction), 50);
    }

    #[test]
    fn apo_round_robins_children_over_parents() {
        let ids = IdAllocator::new();
        let parents: Vec<_> = (0..5)
            .map(|i| seed_parent(&ids, &format!("Variant {i}: {{input}}")))
            .collect();
        let generator = ModelSpec::generator_default();
        let target = ModelSpec::target_default();
        let train_set = train(30);
        let ctx = context(&parents, &train_set, &generator, 3);
        let task = task();
        let oracle = SyntheticOracle::with_dataset(
            SyntheticOracleParams {
                base_rate: 0.2,
                keyword_increment: 0.0,
                ..Default::default()
            },
            train_set.clone(),
            &task,
        );
        let gateway = Gateway::mock(Arc::new(oracle));
        let children = apo_generate(
            &ctx,
            &TemplateSet::builtin(),
            &target,
            &task,
            &gateway,
            10,
            &ApoConfig::default(),
            &ids,
        )
        .unwrap();
        let mut per_parent: BTreeMap<CandidateId, usize> = BTreeMap::new();
        for child in &children {
            *per_parent.entry(child.lineage.parent_ids[0]).or_insert(0) += 1;
        }
        assert_eq!(per_parent.len(), 5);
        assert!(per_parent.values().all(|&n| n == 2));
    }

    #[test]
    fn apo_falls_back_to_mutation_when_error_free() {
        let ids = IdAllocator::new();
        let parents = vec![seed_parent(&ids, "Classify: {input}")];
        let generator = ModelSpec::generator_default();
        let target = ModelSpec::target_default();
        let train_set = train(20);
        let ctx = context(&parents, &train_set, &generator, 1);
        let task = task();
        let gateway = Gateway::mock(Arc::new(AllCorrectOracle::new(train_set.clone())));
        let children = apo_generate(
            &ctx,
            &TemplateSet::builtin(),
            &target,
            &task,
            &gateway,
            2,
            &ApoConfig::default(),
            &ids,
        )
        .unwrap();
        assert_eq!(children.len(), 2);
        for child in &children {
            assert_eq!(child.lineage.strategy, StrategyKind::Mutator);
            assert!(child.lineage.mutation_subtype.is_some());
        }
        // Fallback mutation costs one generator call per child.
        assert_eq!(gateway.ledger().requests(Purpose::Generation), 2);
    }

    fn trajectory_of(n: usize) -> Trajectory {
        let mut trajectory = Trajectory::new(10);
        for i in 0..n {
            trajectory.push(TrajectoryEntry {
                candidate_id: CandidateId(i as u64),
                text: format!("prompt {i} {{input}}"),
                score: Accuracy::new(i as u64, n as u64),
                generation: 0,
            });
        }
        trajectory
    }

    #[test]
    fn opro_zero_dropout_lists_full_trajectory_ascending() {
        let trajectory = trajectory_of(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rendered = render_trajectory(&trajectory, 0.0, &mut rng);
        assert_eq!(rendered.matches("Score ").count(), 3);
        // Worst-to-best means ascending scores.
        let first = rendered.find("Score 0.00").unwrap();
        let last = rendered.find("Score 0.67").unwrap();
        assert!(first < last);
    }

    #[test]
    fn opro_retains_best_when_everything_drops() {
        let trajectory = trajectory_of(5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rendered = render_trajectory(&trajectory, 0.999_999, &mut rng);
        assert_eq!(rendered.matches("Score ").count(), 1);
        assert!(rendered.contains(&trajectory.best().unwrap().text));
    }

    #[test]
    fn opro_dropout_retention_matches_binomial_mean() {
        let trajectory = trajectory_of(10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut total = 0usize;
        let renders = 1000;
        for _ in 0..renders {
            total += render_trajectory(&trajectory, 0.5, &mut rng).matches("Score ").count();
        }
        let mean = total as f64 / renders as f64;
        // Monte-Carlo bound around np = 5 (floor of one raises it slightly).
        assert!((4.3..=5.7).contains(&mean), "mean retained {mean}");
    }

    #[test]
    fn opro_children_descend_from_the_best_entry() {
        let ids = IdAllocator::new();
        let parents = vec![seed_parent(&ids, "Classify: {input}")];
        let generator = ModelSpec::generator_default();
        let ctx = context(&parents, &[], &generator, 5);
        let trajectory = trajectory_of(4);
        let gateway = echo_gateway();
        let children = opro_generate(
            &ctx,
            &trajectory,
            &TemplateSet::builtin(),
            &gateway,
            3,
            0.1,
            &ids,
        )
        .unwrap();
        assert_eq!(children.len(), 3);
        let best_id = trajectory.best().unwrap().candidate_id;
        for child in &children {
            assert_eq!(child.lineage.strategy, StrategyKind::Opro);
            assert_eq!(child.lineage.parent_ids, vec![best_id]);
        }
        assert!(matches!(
            opro_generate(
                &ctx,
                &Trajectory::new(10),
                &TemplateSet::builtin(),
                &gateway,
                1,
                0.1,
                &ids
            ),
            Err(StrategyError::EmptyTrajectory)
        ));
    }

    #[test]
    fn trajectory_stays_bounded_and_sorted() {
        let mut trajectory = Trajectory::new(3);
        for i in 0..10u64 {
            trajectory.push(TrajectoryEntry {
                candidate_id: CandidateId(i),
                text: format!("p{i} {{input}}"),
                score: Accuracy::new(i, 10),
                generation: 0,
            });
        }
        assert_eq!(trajectory.len(), 3);
        let scores: Vec<u64> = trajectory.entries().iter().map(|e| e.score.correct).collect();
        assert_eq!(scores, vec![9, 8, 7]);
        // Re-pushing an existing id with a better score updates in place.
        trajectory.push(TrajectoryEntry {
            candidate_id: CandidateId(8),
            text: "p8 {input}".into(),
            score: Accuracy::new(10, 10),
            generation: 1,
        });
        assert_eq!(trajectory.best().unwrap().candidate_id, CandidateId(8));
        assert_eq!(trajectory.len(), 3);
    }

    #[test]
    fn pure_strategies_never_touch_the_gateway() {
        let ids = IdAllocator::new();
        let parents = vec![
            seed_parent(&ids, "first parent prompt {input}"),
            seed_parent(&ids, "second parent prompt {input}"),
        ];
        let generator = ModelSpec::generator_default();
        let train_set = train(10);
        let ctx = context(&parents, &train_set, &generator, 0);
        let gateway = echo_gateway();
        crossover(&ctx, &parents[0].0, &parents[1].0, &ids).unwrap();
        few_shot_augment(&ctx, &parents[0].0, 0, &ids).unwrap();
        let snapshot = gateway.ledger().snapshot();
        assert_eq!(snapshot.total_requests(), 0);
    }
}
