//! The three selection strategies: complete evaluation, successive halving
//! and UCB-E bandit best-arm identification, all with exact prediction-call
//! accounting.

use super::{evaluate_prompt, EvalError};
use crate::dataset::{Sample, TaskSpec};
use crate::domain::{Accuracy, CandidateId, PromptCandidate};
use crate::gateway::{Gateway, ModelSpec};
use crate::templates::TemplateSet;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

fn default_arms() -> usize {
    20
}
fn default_batch() -> usize {
    15
}
fn default_iterations() -> usize {
    5
}
fn default_exploration() -> f64 {
    1.0
}

/// UCB-E bandit parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    #[serde(default = "default_arms")]
    pub arms_evaluated: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_exploration")]
    pub exploration_a: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            arms_evaluated: default_arms(),
            batch_size: default_batch(),
            iterations: default_iterations(),
            exploration_a: default_exploration(),
        }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.arms_evaluated == 0 || self.batch_size == 0 || self.iterations == 0 {
            return Err(EvalError::ConfigError(
                "bandit arms, batch size and iterations must be positive".into(),
            ));
        }
        if self.exploration_a <= 0.0 {
            return Err(EvalError::ConfigError(
                "bandit exploration parameter must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn default_batch_fraction() -> f64 {
    0.2
}
fn default_elimination() -> f64 {
    0.4
}
fn default_survivors() -> usize {
    7
}

/// Successive-halving parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalvingConfig {
    #[serde(default = "default_batch_fraction")]
    pub batch_fraction: f64,
    #[serde(default = "default_elimination")]
    pub elimination_fraction: f64,
    #[serde(default = "default_survivors")]
    pub target_survivors: usize,
}

impl Default for HalvingConfig {
    fn default() -> Self {
        Self {
            batch_fraction: default_batch_fraction(),
            elimination_fraction: default_elimination(),
            target_survivors: default_survivors(),
        }
    }
}

impl HalvingConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let in_unit = |f: f64| f > 0.0 && f < 1.0;
        if !in_unit(self.batch_fraction) || !in_unit(self.elimination_fraction) {
            return Err(EvalError::ConfigError(
                "halving fractions must lie strictly between 0 and 1".into(),
            ));
        }
        if self.target_survivors == 0 {
            return Err(EvalError::ConfigError(
                "target_survivors must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Which selection strategy a run uses, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SelectionMethod {
    Complete,
    SuccessiveHalving(HalvingConfig),
    Bandit(BanditConfig),
}

impl SelectionMethod {
    pub fn name(&self) -> SelectionMethodName {
        match self {
            SelectionMethod::Complete => SelectionMethodName::Complete,
            SelectionMethod::SuccessiveHalving(_) => SelectionMethodName::SuccessiveHalving,
            SelectionMethod::Bandit(_) => SelectionMethodName::Bandit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethodName {
    Complete,
    SuccessiveHalving,
    Bandit,
}

/// One candidate's place in a selection outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub candidate_id: CandidateId,
    pub correct: u64,
    pub samples_seen: u64,
}

impl RankedCandidate {
    pub fn accuracy(&self) -> Accuracy {
        Accuracy::new(self.correct, self.samples_seen)
    }

    pub fn score(&self) -> f64 {
        self.accuracy().value()
    }
}

/// Ranked candidates plus the prediction-call bill for producing them.
/// Judge calls are ledgered separately under the judging purpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub ranked: Vec<RankedCandidate>,
    pub total_calls: u64,
    pub method: SelectionMethodName,
}

impl SelectionOutcome {
    pub fn top(&self) -> Option<&RankedCandidate> {
        self.ranked.first()
    }
}

/// Shared arguments of the selection entry points.
pub struct SelectionEnv<'a> {
    pub target: &'a ModelSpec,
    pub task: &'a TaskSpec,
    pub templates: &'a TemplateSet,
    pub gateway: &'a Gateway,
}

pub fn select(
    method: &SelectionMethod,
    population: &[PromptCandidate],
    val_samples: &[Sample],
    seed: u64,
    env: &SelectionEnv,
) -> Result<SelectionOutcome, EvalError> {
    match method {
        SelectionMethod::Complete => select_complete(population, val_samples, env),
        SelectionMethod::SuccessiveHalving(config) => {
            select_successive_halving(population, val_samples, config, seed, env)
        }
        SelectionMethod::Bandit(config) => {
            select_bandit_ucbe(population, val_samples, config, seed, env)
        }
    }
}

// Ties everywhere break on ascending candidate id.
fn rank(mut entries: Vec<RankedCandidate>) -> Vec<RankedCandidate> {
    entries.sort_by(|a, b| {
        b.accuracy()
            .cmp(&a.accuracy())
            .then(a.candidate_id.cmp(&b.candidate_id))
    });
    entries
}

/// Evaluate every candidate on every validation sample.
/// Exactly `|population| * |val_samples|` prediction calls.
pub fn select_complete(
    population: &[PromptCandidate],
    val_samples: &[Sample],
    env: &SelectionEnv,
) -> Result<SelectionOutcome, EvalError> {
    if population.is_empty() {
        return Err(EvalError::ConfigError("population is empty".into()));
    }
    if val_samples.is_empty() {
        return Err(EvalError::EmptySampleSet);
    }
    let mut entries = Vec::with_capacity(population.len());
    let mut total_calls = 0u64;
    for candidate in population {
        let result = evaluate_prompt(
            candidate,
            val_samples,
            env.target,
            env.task,
            env.templates,
            env.gateway,
        )?;
        total_calls += result.per_sample.len() as u64;
        let accuracy = result.accuracy();
        entries.push(RankedCandidate {
            candidate_id: candidate.id,
            correct: accuracy.correct,
            samples_seen: accuracy.total,
        });
    }
    Ok(SelectionOutcome {
        ranked: rank(entries),
        total_calls,
        method: SelectionMethodName::Complete,
    })
}

/// Successive halving: each round evaluates the survivors on a fresh batch
/// of `ceil(batch_fraction * |val|)` samples and drops
/// `floor(elimination_fraction * survivors)` of the worst, clamped so at
/// least `target_survivors` remain. Ranking scores are means over every
/// batch a candidate saw; eliminated candidates rank below survivors,
/// later eliminations first.
pub fn select_successive_halving(
    population: &[PromptCandidate],
    val_samples: &[Sample],
    config: &HalvingConfig,
    seed: u64,
    env: &SelectionEnv,
) -> Result<SelectionOutcome, EvalError> {
    config.validate()?;
    if population.is_empty() {
        return Err(EvalError::ConfigError("population is empty".into()));
    }
    if config.target_survivors > population.len() {
        return Err(EvalError::ConfigError(format!(
            "target_survivors {} exceeds population size {}",
            config.target_survivors,
            population.len()
        )));
    }
    if val_samples.is_empty() && population.len() > config.target_survivors {
        return Err(EvalError::EmptySampleSet);
    }

    let batch_size =
        ((config.batch_fraction * val_samples.len() as f64).ceil() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut survivors: Vec<usize> = (0..population.len()).collect();
    let mut scores: Vec<Accuracy> = vec![Accuracy::zero(); population.len()];
    // (candidate index, round eliminated in)
    let mut eliminated: Vec<(usize, u64)> = Vec::new();
    let mut total_calls = 0u64;
    let mut round = 0u64;

    while survivors.len() > config.target_survivors {
        round += 1;
        let batch: Vec<Sample> = index::sample(&mut rng, val_samples.len(), batch_size)
            .iter()
            .map(|i| val_samples[i].clone())
            .collect();
        for &idx in &survivors {
            let result = evaluate_prompt(
                &population[idx],
                &batch,
                env.target,
                env.task,
                env.templates,
                env.gateway,
            )?;
            total_calls += result.per_sample.len() as u64;
            scores[idx].absorb(result.accuracy());
        }
        let mut drop_count =
            (config.elimination_fraction * survivors.len() as f64).floor() as usize;
        drop_count = drop_count.min(survivors.len() - config.target_survivors);
        if drop_count == 0 {
            // Fractions too small to make progress at this population size.
            drop_count = survivors.len() - config.target_survivors;
        }
        // Worst first: ascending score, ties dropped from the higher id down
        // so surviving ties keep the lowest ids.
        survivors.sort_by(|&a, &b| {
            scores[a]
                .cmp(&scores[b])
                .then(population[b].id.cmp(&population[a].id))
        });
        for idx in survivors.drain(..drop_count) {
            eliminated.push((idx, round));
        }
    }

    let survivor_entries: Vec<RankedCandidate> = survivors
        .iter()
        .map(|&idx| RankedCandidate {
            candidate_id: population[idx].id,
            correct: scores[idx].correct,
            samples_seen: scores[idx].total,
        })
        .collect();
    let mut ranked = rank(survivor_entries);

    eliminated.sort_by(|&(a, round_a), &(b, round_b)| {
        round_b
            .cmp(&round_a)
            .then(scores[b].cmp(&scores[a]))
            .then(population[a].id.cmp(&population[b].id))
    });
    ranked.extend(eliminated.iter().map(|&(idx, _)| RankedCandidate {
        candidate_id: population[idx].id,
        correct: scores[idx].correct,
        samples_seen: scores[idx].total,
    }));

    Ok(SelectionOutcome {
        ranked,
        total_calls,
        method: SelectionMethodName::SuccessiveHalving,
    })
}

/// UCB-E index: empirical mean plus an exploration bonus shrinking with the
/// number of samples the arm has seen. Unevaluated arms rank first.
pub fn ucbe_index(mean: f64, samples_seen: u64, exploration_a: f64) -> f64 {
    if samples_seen == 0 {
        f64::INFINITY
    } else {
        mean + (exploration_a / samples_seen as f64).sqrt()
    }
}

/// UCB-E best-arm identification: each iteration pulls the
/// `arms_evaluated` candidates with the highest index, evaluating each on a
/// fresh random batch of `batch_size` validation samples. Final ranking is
/// by empirical mean.
pub fn select_bandit_ucbe(
    population: &[PromptCandidate],
    val_samples: &[Sample],
    config: &BanditConfig,
    seed: u64,
    env: &SelectionEnv,
) -> Result<SelectionOutcome, EvalError> {
    config.validate()?;
    if population.is_empty() {
        return Err(EvalError::ConfigError("population is empty".into()));
    }
    if val_samples.is_empty() {
        return Err(EvalError::EmptySampleSet);
    }
    let arms = config.arms_evaluated.min(population.len());
    let batch_size = config.batch_size.min(val_samples.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores: Vec<Accuracy> = vec![Accuracy::zero(); population.len()];
    let mut total_calls = 0u64;

    for _ in 0..config.iterations {
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| {
            let index_a = ucbe_index(scores[a].value(), scores[a].total, config.exploration_a);
            let index_b = ucbe_index(scores[b].value(), scores[b].total, config.exploration_a);
            index_b
                .partial_cmp(&index_a)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(population[a].id.cmp(&population[b].id))
        });
        for &idx in order.iter().take(arms) {
            let batch: Vec<Sample> = index::sample(&mut rng, val_samples.len(), batch_size)
                .iter()
                .map(|i| val_samples[i].clone())
                .collect();
            let result = evaluate_prompt(
                &population[idx],
                &batch,
                env.target,
                env.task,
                env.templates,
                env.gateway,
            )?;
            total_calls += result.per_sample.len() as u64;
            scores[idx].absorb(result.accuracy());
        }
    }

    let entries: Vec<RankedCandidate> = population
        .iter()
        .enumerate()
        .map(|(idx, candidate)| RankedCandidate {
            candidate_id: candidate.id,
            correct: scores[idx].correct,
            samples_seen: scores[idx].total,
        })
        .collect();
    Ok(SelectionOutcome {
        ranked: rank(entries),
        total_calls,
        method: SelectionMethodName::Bandit,
    })
}

/// Pool the per-candidate counts of repeated selection passes and re-rank,
/// which is the arithmetic mean when every pass saw equal sample counts.
pub fn merge_outcomes(outcomes: Vec<SelectionOutcome>) -> SelectionOutcome {
    debug_assert!(!outcomes.is_empty());
    let method = outcomes[0].method;
    let mut total_calls = 0u64;
    let mut pooled: BTreeMap<CandidateId, Accuracy> = BTreeMap::new();
    for outcome in outcomes {
        total_calls += outcome.total_calls;
        for entry in outcome.ranked {
            pooled
                .entry(entry.candidate_id)
                .or_insert_with(Accuracy::zero)
                .absorb(entry.accuracy());
        }
    }
    let entries = pooled
        .into_iter()
        .map(|(candidate_id, accuracy)| RankedCandidate {
            candidate_id,
            correct: accuracy.correct,
            samples_seen: accuracy.total,
        })
        .collect();
    SelectionOutcome {
        ranked: rank(entries),
        total_calls,
        method,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AnswerMode, GoldAnswer};
    use crate::domain::{new_candidate, IdAllocator, Lineage, MetricKind};
    use crate::gateway::mock::BernoulliOracle;
    use crate::gateway::Purpose;
    use std::sync::Arc;

    fn task() -> TaskSpec {
        TaskSpec {
            name: "synthetic".into(),
            answer_mode: AnswerMode::Multilabel,
            label_vocabulary: Some(vec!["alpha".into(), "beta".into()]),
            metric: MetricKind::StrictSetAccuracy,
        }
    }

    fn samples(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                id: format!("s{i}"),
                input: format!("sample input number {i:04}"),
                gold: GoldAnswer::label_set(["alpha"]),
            })
            .collect()
    }

    fn population(ids: &IdAllocator, n: usize) -> Vec<PromptCandidate> {
        (0..n)
            .map(|i| {
                new_candidate(ids, format!("prompt variant {i}: {{input}}"), Lineage::seed(), 0)
                    .unwrap()
            })
            .collect()
    }

    /// Oracle where candidate `prompt variant 0` is the clear best arm.
    fn gapped_oracle(all: &[Sample], best_p: f64, rest_p: f64) -> Arc<BernoulliOracle> {
        Arc::new(BernoulliOracle::new(
            vec![("prompt variant 0:".into(), best_p)],
            rest_p,
            all.to_vec(),
        ))
    }

    fn env<'a>(
        target: &'a ModelSpec,
        task: &'a TaskSpec,
        templates: &'a TemplateSet,
        gateway: &'a Gateway,
    ) -> SelectionEnv<'a> {
        SelectionEnv {
            target,
            task,
            templates,
            gateway,
        }
    }

    #[test]
    fn complete_bills_population_times_samples() {
        let ids = IdAllocator::new();
        let pop = population(&ids, 50);
        let val = samples(50);
        let gateway = Gateway::mock(gapped_oracle(&val, 0.9, 0.5));
        let task = task();
        let templates = TemplateSet::builtin();
        let target = ModelSpec::target_default();
        let outcome =
            select_complete(&pop, &val, &env(&target, &task, &templates, &gateway)).unwrap();
        assert_eq!(outcome.total_calls, 2500);
        assert_eq!(gateway.ledger().requests(Purpose::Prediction), 2500);
        assert_eq!(outcome.ranked.len(), 50);
    }

    #[test]
    fn complete_single_pair_bills_one_call() {
        let ids = IdAllocator::new();
        let pop = population(&ids, 1);
        let val = samples(1);
        let gateway = Gateway::mock(gapped_oracle(&val, 1.0, 1.0));
        let task = task();
        let templates = TemplateSet::builtin();
        let target = ModelSpec::target_default();
        let outcome =
            select_complete(&pop, &val, &env(&target, &task, &templates, &gateway)).unwrap();
        assert_eq!(outcome.total_calls, 1);
    }

    #[test]
    fn ties_break_on_ascending_candidate_id() {
        let ids = IdAllocator::new();
        let pop = population(&ids, 3);
        let val = samples(10);
        // Same probability for every arm: deterministic oracle output means
        // equal scores are common; ties must order by id.
        let gateway = Gateway::mock(gapped_oracle(&val, 1.0, 1.0));
        let task = task();
        let templates = TemplateSet::builtin();
        let target = ModelSpec::target_default();
        let outcome =
            select_complete(&pop, &val, &env(&target, &task, &templates, &gateway)).unwrap();
        let order: Vec<CandidateId> = outcome.ranked.iter().map(|r| r.candidate_id).collect();
        assert_eq!(order, vec![pop[0].id, pop[1].id, pop[2].id]);
    }

    #[test]
    fn halving_schedule_matches_floor_rule() {
        // 50 candidates, 50 samples, defaults, target 7:
        // survivors 50 -> 30 -> 18 -> 11 -> 7, calls 500+300+180+110 = 1090.
        let ids = IdAllocator::new();
        let pop = population(&ids, 50);
        let val = samples(50);
        let gateway = Gateway::mock(gapped_oracle(&val, 0.9, 0.5));
        let task = task();
        let templates = TemplateSet::builtin();
        let target = ModelSpec::target_default();
        let outcome = select_successive_halving(
            &pop,
            &val,
            &HalvingConfig::default(),
            7,
            &env(&target, &task, &templates, &gateway),
        )
        .unwrap();
        assert_eq!(outcome.total_calls, 1090);
        assert_eq!(gateway.ledger().requests(Purpose::Prediction), 1090);
        assert_eq!(outcome.ranked.len(), 50);
        // Every input candidate appears exactly once.
        let mut seen: Vec<u64> = outcome.ranked.iter().map(|r| r.candidate_id.0).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 50);
    }

    #[test]
    fn halving_at_target_size_makes_no_calls() {
        let ids = IdAllocator::new();
        let pop = population(&ids, 7);
        let val = samples(50);
        let gateway = Gateway::mock(gapped_oracle(&val, 0.9, 0.5));
        let task = task();
        let templates = TemplateSet::builtin();
        let target = ModelSpec::target_default();
        let outcome = select_successive_halving(
            &pop,
            &val,
            &HalvingConfig::default(),
            7,
            &env(&target, &task, &templates, &gateway),
        )
        .unwrap();
        assert_eq!(outcome.total_calls, 0);
        assert_eq!(outcome.ranked.len(), 7);
    }

    #[test]
    fn halving_rejects_degenerate_config() {
        let ids = IdAllocator::new();
        let pop = population(&ids, 5);
        let val = samples(10);
        let gateway = Gateway::mock(gapped_oracle(&val, 0.9, 0.5));
        let task = task();
        let templates = TemplateSet::builtin();
        let target = ModelSpec::target_default();
        let bad = HalvingConfig {
            batch_fraction: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            select_successive_halving(
                &pop,
                &val,
                &bad,
                7,
                &env(&target, &task, &templates, &gateway)
            ),
            Err(EvalError::ConfigError(_))
        ));
    }

    #[test]
    fn bandit_default_budget_is_1500() {
        let ids = IdAllocator::new();
        let pop = population(&ids, 50);
        let val = samples(50);
        let gateway = Gateway::mock(gapped_oracle(&val, 0.8, 0.5));
        let task = task();
        let templates = TemplateSet::builtin();
        let target = ModelSpec::target_default();
        let outcome = select_bandit_ucbe(
            &pop,
            &val,
            &BanditConfig::default(),
            3,
            &env(&target, &task, &templates, &gateway),
        )
        .unwrap();
        assert_eq!(outcome.total_calls, 1500);
        assert_eq!(gateway.ledger().requests(Purpose::Prediction), 1500);
        assert_eq!(outcome.ranked.len(), 50);
    }

    #[test]
    fn bandit_single_candidate_gets_all_pulls() {
        let ids = IdAllocator::new();
        let pop = population(&ids, 1);
        let val = samples(50);
        let gateway = Gateway::mock(gapped_oracle(&val, 0.8, 0.5));
        let task = task();
        let templates = TemplateSet::builtin();
        let target = ModelSpec::target_default();
        let config = BanditConfig::default();
        let outcome = select_bandit_ucbe(
            &pop,
            &val,
            &config,
            3,
            &env(&target, &task, &templates, &gateway),
        )
        .unwrap();
        assert_eq!(outcome.ranked[0].candidate_id, pop[0].id);
        assert_eq!(
            outcome.ranked[0].samples_seen,
            (config.iterations * config.batch_size) as u64
        );
    }

    #[test]
    fn ucbe_index_decreases_with_pulls() {
        let a = 1.0;
        let mut last = ucbe_index(0.5, 1, a);
        for n in [2u64, 5, 10, 100, 1000] {
            let next = ucbe_index(0.5, n, a);
            assert!(next < last, "index must shrink as n grows");
            last = next;
        }
        assert!(ucbe_index(0.5, 0, a).is_infinite());
    }

    #[test]
    fn merge_pools_counts_and_reranks() {
        let entry = |id: u64, correct: u64, seen: u64| RankedCandidate {
            candidate_id: CandidateId(id),
            correct,
            samples_seen: seen,
        };
        let merged = merge_outcomes(vec![
            SelectionOutcome {
                ranked: vec![entry(0, 10, 20), entry(1, 15, 20)],
                total_calls: 40,
                method: SelectionMethodName::Complete,
            },
            SelectionOutcome {
                ranked: vec![entry(0, 18, 20), entry(1, 5, 20)],
                total_calls: 40,
                method: SelectionMethodName::Complete,
            },
        ]);
        assert_eq!(merged.total_calls, 80);
        assert_eq!(merged.ranked[0].candidate_id, CandidateId(0));
        assert_eq!(merged.ranked[0].correct, 28);
        assert_eq!(merged.ranked[0].samples_seen, 40);
    }

    #[test]
    fn complete_ranking_matches_brute_force_ordering() {
        // Oracle equivalence: ranking by select_complete must equal an
        // independent sort of per-candidate evaluate_prompt accuracies.
        let ids = IdAllocator::new();
        let pop = population(&ids, 8);
        let val = samples(25);
        let task = task();
        let templates = TemplateSet::builtin();
        let target = ModelSpec::target_default();
        let gateway = Gateway::mock(gapped_oracle(&val, 0.9, 0.4));
        let e = env(&target, &task, &templates, &gateway);
        let outcome = select_complete(&pop, &val, &e).unwrap();

        let mut brute: Vec<(crate::domain::Accuracy, CandidateId)> = pop
            .iter()
            .map(|candidate| {
                let result = crate::evaluation::evaluate_prompt(
                    candidate, &val, &target, &task, &templates, &gateway,
                )
                .unwrap();
                (result.accuracy(), candidate.id)
            })
            .collect();
        brute.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

        let ranked_ids: Vec<CandidateId> =
            outcome.ranked.iter().map(|r| r.candidate_id).collect();
        let brute_ids: Vec<CandidateId> = brute.into_iter().map(|(_, id)| id).collect();
        assert_eq!(ranked_ids, brute_ids);
    }

    #[test]
    fn all_methods_agree_on_a_wide_gap() {
        let ids = IdAllocator::new();
        let pop = population(&ids, 10);
        let val = samples(50);
        let task = task();
        let templates = TemplateSet::builtin();
        let target = ModelSpec::target_default();
        for seed in 0..3u64 {
            let gateway = Gateway::mock(gapped_oracle(&val, 0.85, 0.5));
            let e = env(&target, &task, &templates, &gateway);
            let complete = select_complete(&pop, &val, &e).unwrap();
            let halving = select_successive_halving(
                &pop,
                &val,
                &HalvingConfig {
                    target_survivors: 3,
                    ..Default::default()
                },
                seed,
                &e,
            )
            .unwrap();
            let bandit =
                select_bandit_ucbe(&pop, &val, &BanditConfig::default(), seed, &e).unwrap();
            assert_eq!(complete.top().unwrap().candidate_id, pop[0].id);
            assert_eq!(halving.top().unwrap().candidate_id, pop[0].id);
            assert_eq!(bandit.top().unwrap().candidate_id, pop[0].id);
        }
    }
}
