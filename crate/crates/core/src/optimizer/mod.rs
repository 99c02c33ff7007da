//! The optimization loop: per-generation slot allocation across strategies,
//! generation, evaluation, selection, an elitist parent pool, a hall of
//! fame, an append-only event history and resumable checkpoints.

pub mod checkpoint;
pub mod events;

pub use checkpoint::{checkpoint_load, checkpoint_save, CheckpointError};
pub use events::{
    append_events, read_events, truncate_after, GenerationCalls, HistoryError, PoolEntry,
    RunEvent,
};

use crate::dataset::{DatasetSplits, TaskSpec};
use crate::domain::{
    new_candidate, Accuracy, DomainError, EvalRecord, IdAllocator, Lineage, PromptCandidate,
    Split, StrategyKind,
};
use crate::evaluation::selection::{
    merge_outcomes, select, SelectionEnv, SelectionMethod, SelectionMethodName, SelectionOutcome,
};
use crate::evaluation::{evaluate_prompt, EvalError};
use crate::gateway::{Gateway, LedgerSnapshot, ModelSpec};
use crate::report::{build_report, OptimizationReport};
use crate::strategies::{
    apo_generate, crossover, few_shot_augment, mutate, opro_generate, pick_mutation_kind,
    ApoConfig, StrategyContext, StrategyError, Trajectory, TrajectoryEntry,
};
use crate::templates::TemplateSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

const HALL_OF_FAME_CAP: usize = 10;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("every generation strategy failed; last error: {0}")]
    AllStrategiesFailed(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Per-strategy fractions of each generation's population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyWeights {
    pub mutator: f64,
    pub crossover: f64,
    pub few_shot: f64,
    pub apo: f64,
    pub opro: f64,
}

impl Default for StrategyWeights {
    fn default() -> Self {
        Self {
            mutator: 0.4,
            crossover: 0.1,
            few_shot: 0.1,
            apo: 0.2,
            opro: 0.2,
        }
    }
}

impl StrategyWeights {
    pub fn get(&self, kind: StrategyKind) -> f64 {
        match kind {
            StrategyKind::Seed => 0.0,
            StrategyKind::Mutator => self.mutator,
            StrategyKind::Crossover => self.crossover,
            StrategyKind::FewShot => self.few_shot,
            StrategyKind::Apo => self.apo,
            StrategyKind::Opro => self.opro,
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let weights = [self.mutator, self.crossover, self.few_shot, self.apo, self.opro];
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(OptimizerError::InvalidConfig(
                "strategy weights must be non-negative and finite".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(OptimizerError::InvalidConfig(format!(
                "strategy weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }

    /// Highest-weight strategy, ties resolved in strategy enum order.
    pub fn argmax(&self) -> StrategyKind {
        let mut best = StrategyKind::Mutator;
        let mut best_weight = f64::NEG_INFINITY;
        for kind in StrategyKind::GENERATING {
            let weight = self.get(kind);
            if weight > best_weight {
                best = kind;
                best_weight = weight;
            }
        }
        best
    }
}

/// Integer slot counts per strategy: floor(weight * population), with every
/// remainder slot handed to the highest-weight strategy.
pub fn allocate_slots(
    weights: &StrategyWeights,
    population_size: usize,
) -> BTreeMap<StrategyKind, usize> {
    let mut slots = BTreeMap::new();
    let mut assigned = 0usize;
    for kind in StrategyKind::GENERATING {
        let count = (weights.get(kind) * population_size as f64).floor() as usize;
        slots.insert(kind, count);
        assigned += count;
    }
    *slots.get_mut(&weights.argmax()).expect("argmax slot") += population_size - assigned;
    slots
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OproConfig {
    pub max_trajectory: usize,
    pub dropout_p: f64,
}

impl Default for OproConfig {
    fn default() -> Self {
        Self {
            max_trajectory: 10,
            dropout_p: 0.1,
        }
    }
}

fn default_population() -> usize {
    50
}
fn default_generations() -> u64 {
    10
}
fn default_parent_pool() -> usize {
    5
}
fn default_selection() -> SelectionMethod {
    SelectionMethod::Complete
}
fn default_test_every() -> Option<u64> {
    Some(1)
}
fn default_repeats() -> usize {
    1
}
fn default_elitism() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(default = "default_population")]
    pub population_size: usize,
    #[serde(default = "default_generations")]
    pub generations: u64,
    #[serde(default)]
    pub strategy_weights: StrategyWeights,
    #[serde(default = "default_parent_pool")]
    pub parent_pool_size: usize,
    #[serde(default = "default_selection")]
    pub selection: SelectionMethod,
    #[serde(default = "ModelSpec::generator_default")]
    pub generator_model: ModelSpec,
    #[serde(default = "ModelSpec::target_default")]
    pub target_model: ModelSpec,
    #[serde(default)]
    pub seed: u64,
    /// Evaluate the current best on the test split every N generations.
    #[serde(default = "default_test_every")]
    pub test_eval_every: Option<u64>,
    #[serde(default = "default_repeats")]
    pub repeat_evaluations: usize,
    /// Parents compete alongside children in every selection round.
    #[serde(default = "default_elitism")]
    pub elitism: bool,
    #[serde(default)]
    pub apo: ApoConfig,
    #[serde(default)]
    pub opro: OproConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.population_size == 0 {
            return Err(OptimizerError::InvalidConfig(
                "population_size must be positive".into(),
            ));
        }
        if self.parent_pool_size == 0 || self.parent_pool_size > self.population_size {
            return Err(OptimizerError::InvalidConfig(format!(
                "parent_pool_size must lie in 1..={}",
                self.population_size
            )));
        }
        if self.repeat_evaluations == 0 {
            return Err(OptimizerError::InvalidConfig(
                "repeat_evaluations must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.opro.dropout_p) {
            return Err(OptimizerError::InvalidConfig(
                "opro.dropout_p must lie in [0,1)".into(),
            ));
        }
        self.strategy_weights.validate()
    }

    /// Stable hash binding checkpoints to the configuration they ran under.
    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self).expect("config serializes"));
        hex::encode(hasher.finalize())
    }
}

/// Everything a run needs besides the config: task, data, templates and the
/// gateway carrying the backend.
pub struct RunEnv<'a> {
    pub config: &'a OptimizerConfig,
    pub task: &'a TaskSpec,
    pub splits: &'a DatasetSplits,
    pub templates: &'a TemplateSet,
    pub gateway: &'a Gateway,
}

/// State carried between generations; exactly what checkpoints persist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationState {
    pub version: u32,
    pub config_hash: String,
    /// Last completed generation.
    pub generation_index: u64,
    pub next_candidate_id: u64,
    /// Best performers so far, sorted descending by score.
    pub parent_pool: Vec<(PromptCandidate, Accuracy)>,
    /// Candidates produced by the last completed generation.
    pub population: Vec<PromptCandidate>,
    pub opro_trajectory: Trajectory,
    pub hall_of_fame: Vec<(PromptCandidate, Accuracy)>,
    pub ledger: LedgerSnapshot,
}

impl GenerationState {
    pub fn best(&self) -> Option<&(PromptCandidate, Accuracy)> {
        self.hall_of_fame.first()
    }
}

fn hof_push(
    hof: &mut Vec<(PromptCandidate, Accuracy)>,
    candidate: &PromptCandidate,
    score: Accuracy,
) {
    if let Some(existing) = hof.iter_mut().find(|(c, _)| c.id == candidate.id) {
        if score > existing.1 {
            existing.0 = candidate.clone();
            existing.1 = score;
        }
    } else {
        hof.push((candidate.clone(), score));
    }
    hof.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.id.cmp(&b.0.id)));
    hof.truncate(HALL_OF_FAME_CAP);
}

fn derive_seed(master: u64, label: &str, n: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_be_bytes());
    hasher.update(label.as_bytes());
    hasher.update(n.to_be_bytes());
    let bytes: [u8; 8] = hasher.finalize()[..8].try_into().expect("eight bytes");
    u64::from_be_bytes(bytes)
}

fn unix_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Evaluate the seed prompt and build generation-0 state.
pub fn initialize_run(
    env: &RunEnv,
    seed_prompt: &str,
    ids: &IdAllocator,
) -> Result<(GenerationState, Vec<RunEvent>), OptimizerError> {
    let config = env.config;
    let ledger_before = env.gateway.ledger().snapshot();
    let mut seed = new_candidate(ids, seed_prompt, Lineage::seed(), 0)?;

    let mut events = vec![
        RunEvent::GenerationStarted {
            generation: 0,
            parent_pool: Vec::new(),
        },
        RunEvent::CandidateCreated {
            generation: 0,
            id: seed.id,
            text: seed.text.clone(),
            strategy: StrategyKind::Seed,
            mutation: None,
            parent_ids: Vec::new(),
            fallback: false,
        },
    ];

    let result = evaluate_prompt(
        &seed,
        &env.splits.validation,
        &config.target_model,
        env.task,
        env.templates,
        env.gateway,
    )?;
    let score = result.accuracy();
    seed.eval_records.push(EvalRecord {
        split: Split::Validation,
        metric: env.task.metric.clone(),
        correct: score.correct,
        sample_count: score.total,
        llm_calls: result.llm_calls,
        timestamp: unix_timestamp(),
    });
    events.push(RunEvent::CandidateEvaluated {
        generation: 0,
        id: seed.id,
        split: Split::Validation,
        correct: score.correct,
        total: score.total,
        llm_calls: result.llm_calls,
    });

    let calls_delta = env.gateway.ledger().snapshot().since(&ledger_before);
    events.push(RunEvent::SelectionCompleted {
        generation: 0,
        method: SelectionMethodName::Complete,
        ranked: vec![crate::evaluation::selection::RankedCandidate {
            candidate_id: seed.id,
            correct: score.correct,
            samples_seen: score.total,
        }],
        total_calls: score.total,
        parent_pool: vec![seed.id],
        calls: GenerationCalls {
            generation: calls_delta.requests(crate::gateway::Purpose::Generation),
            prediction: calls_delta.requests(crate::gateway::Purpose::Prediction),
            judging: calls_delta.requests(crate::gateway::Purpose::Judging),
        },
    });

    let mut trajectory = Trajectory::new(config.opro.max_trajectory);
    trajectory.push(TrajectoryEntry {
        candidate_id: seed.id,
        text: seed.text.clone(),
        score,
        generation: 0,
    });
    let mut hall_of_fame = Vec::new();
    hof_push(&mut hall_of_fame, &seed, score);

    Ok((
        GenerationState {
            version: checkpoint::current_version(),
            config_hash: config.config_hash(),
            generation_index: 0,
            next_candidate_id: ids.next_value(),
            parent_pool: vec![(seed, score)],
            population: Vec::new(),
            opro_trajectory: trajectory,
            hall_of_fame,
            ledger: env.gateway.ledger().snapshot(),
        },
        events,
    ))
}

struct GeneratedChild {
    candidate: PromptCandidate,
    /// Strategy whose quota produced this child (lineage may differ after a
    /// fallback).
    invoked_by: StrategyKind,
}

fn run_strategy(
    kind: StrategyKind,
    quota: usize,
    ctx: &StrategyContext,
    state: &GenerationState,
    env: &RunEnv,
    ids: &IdAllocator,
) -> Result<Vec<PromptCandidate>, StrategyError> {
    let config = env.config;
    match kind {
        StrategyKind::Mutator => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            let mut children = Vec::with_capacity(quota);
            for i in 0..quota {
                let parent = &ctx.parents[i % ctx.parents.len()].0;
                let mutation = pick_mutation_kind(&mut rng);
                children.push(mutate(ctx, parent, mutation, env.templates, env.gateway, ids)?);
            }
            Ok(children)
        }
        StrategyKind::Crossover => {
            if ctx.parents.len() < 2 {
                return Err(StrategyError::IdenticalParents);
            }
            let mut children = Vec::with_capacity(quota);
            for i in 0..quota {
                let a = &ctx.parents[i % ctx.parents.len()].0;
                let b = &ctx.parents[(i + 1) % ctx.parents.len()].0;
                children.push(crossover(ctx, a, b, ids)?);
            }
            Ok(children)
        }
        StrategyKind::FewShot => {
            let mut children = Vec::with_capacity(quota);
            for i in 0..quota {
                let parent = &ctx.parents[i % ctx.parents.len()].0;
                let child_seed = derive_seed(ctx.seed, "few_shot_child", i as u64);
                children.push(few_shot_augment(ctx, parent, child_seed, ids)?);
            }
            Ok(children)
        }
        StrategyKind::Apo => apo_generate(
            ctx,
            env.templates,
            &config.target_model,
            env.task,
            env.gateway,
            quota,
            &config.apo,
            ids,
        ),
        StrategyKind::Opro => opro_generate(
            ctx,
            &state.opro_trajectory,
            env.templates,
            env.gateway,
            quota,
            config.opro.dropout_p,
            ids,
        ),
        StrategyKind::Seed => unreachable!("seed is not a generating strategy"),
    }
}

/// One full generation: produce children per the slot allocation, evaluate
/// children (plus parents under elitism) with the configured selection
/// method, pick the next parent pool and update hall of fame and trajectory.
pub fn run_generation(
    state: &GenerationState,
    env: &RunEnv,
    ids: &IdAllocator,
    force_test_eval: bool,
) -> Result<(GenerationState, Vec<RunEvent>), OptimizerError> {
    let config = env.config;
    let generation = state.generation_index + 1;
    let ledger_before = env.gateway.ledger().snapshot();
    let mut events = vec![RunEvent::GenerationStarted {
        generation,
        parent_pool: state
            .parent_pool
            .iter()
            .map(|(candidate, score)| PoolEntry {
                id: candidate.id,
                correct: score.correct,
                total: score.total,
            })
            .collect(),
    }];

    // Generation phase.
    let slots = allocate_slots(&config.strategy_weights, config.population_size);
    let mut children: Vec<GeneratedChild> = Vec::with_capacity(config.population_size);
    for kind in StrategyKind::GENERATING {
        let quota = slots[&kind];
        if quota == 0 {
            continue;
        }
        let ctx = StrategyContext {
            parents: &state.parent_pool,
            train: &env.splits.train,
            generation,
            seed: derive_seed(config.seed, kind.name(), generation),
            generator: &config.generator_model,
        };
        // A failed strategy leaves a shortfall the mutator top-up covers.
        if let Ok(batch) = run_strategy(kind, quota, &ctx, state, env, ids) {
            children.extend(batch.into_iter().map(|candidate| GeneratedChild {
                candidate,
                invoked_by: kind,
            }));
        }
    }

    // Top-up phase: failed or short strategies degrade to extra mutations so
    // the population size stays exact.
    if children.len() < config.population_size {
        let ctx = StrategyContext {
            parents: &state.parent_pool,
            train: &env.splits.train,
            generation,
            seed: derive_seed(config.seed, "topup", generation),
            generator: &config.generator_model,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        while children.len() < config.population_size {
            let parent = &state.parent_pool[children.len() % state.parent_pool.len()].0;
            let mutation = pick_mutation_kind(&mut rng);
            match mutate(&ctx, parent, mutation, env.templates, env.gateway, ids) {
                Ok(candidate) => children.push(GeneratedChild {
                    candidate,
                    invoked_by: StrategyKind::Mutator,
                }),
                Err(err) if children.is_empty() => {
                    return Err(OptimizerError::AllStrategiesFailed(err.to_string()));
                }
                Err(_) => break,
            }
        }
    }
    children.truncate(config.population_size);

    for child in &children {
        events.push(RunEvent::CandidateCreated {
            generation,
            id: child.candidate.id,
            text: child.candidate.text.clone(),
            strategy: child.candidate.lineage.strategy,
            mutation: child.candidate.lineage.mutation_subtype,
            parent_ids: child.candidate.lineage.parent_ids.clone(),
            fallback: child.candidate.lineage.strategy != child.invoked_by,
        });
    }

    // Evaluation + selection phase.
    let mut pool: Vec<PromptCandidate> =
        children.into_iter().map(|child| child.candidate).collect();
    if config.elitism {
        pool.extend(state.parent_pool.iter().map(|(candidate, _)| candidate.clone()));
    }
    let method = effective_method(&config.selection, pool.len());
    let selection_env = SelectionEnv {
        target: &config.target_model,
        task: env.task,
        templates: env.templates,
        gateway: env.gateway,
    };
    let outcomes: Vec<SelectionOutcome> = (0..config.repeat_evaluations)
        .map(|repeat| {
            select(
                &method,
                &pool,
                &env.splits.validation,
                derive_seed(config.seed, "selection", generation * 1_000 + repeat as u64),
                &selection_env,
            )
        })
        .collect::<Result<_, _>>()?;
    let outcome = merge_outcomes(outcomes);

    let timestamp = unix_timestamp();
    let mut by_id: BTreeMap<_, PromptCandidate> =
        pool.into_iter().map(|candidate| (candidate.id, candidate)).collect();
    for entry in outcome.ranked.iter().filter(|e| e.samples_seen > 0) {
        events.push(RunEvent::CandidateEvaluated {
            generation,
            id: entry.candidate_id,
            split: Split::Validation,
            correct: entry.correct,
            total: entry.samples_seen,
            llm_calls: entry.samples_seen,
        });
        if let Some(candidate) = by_id.get_mut(&entry.candidate_id) {
            candidate.eval_records.push(EvalRecord {
                split: Split::Validation,
                metric: env.task.metric.clone(),
                correct: entry.correct,
                sample_count: entry.samples_seen,
                llm_calls: entry.samples_seen,
                timestamp,
            });
        }
    }

    // Selection phase: next parent pool, hall of fame, OPRO trajectory.
    let mut parent_pool: Vec<(PromptCandidate, Accuracy)> = outcome
        .ranked
        .iter()
        .filter(|entry| entry.samples_seen > 0)
        .take(config.parent_pool_size)
        .map(|entry| {
            let candidate = by_id
                .get(&entry.candidate_id)
                .expect("ranked candidates come from the pool")
                .clone();
            (candidate, entry.accuracy())
        })
        .collect();
    if parent_pool.is_empty() {
        // Selection measured nothing; keep the previous parents.
        parent_pool = state.parent_pool.clone();
    }

    let mut hall_of_fame = state.hall_of_fame.clone();
    let mut trajectory = state.opro_trajectory.clone();
    for (candidate, score) in &parent_pool {
        hof_push(&mut hall_of_fame, candidate, *score);
        trajectory.push(TrajectoryEntry {
            candidate_id: candidate.id,
            text: candidate.text.clone(),
            score: *score,
            generation,
        });
    }

    events.push(RunEvent::SelectionCompleted {
        generation,
        method: outcome.method,
        ranked: outcome.ranked.clone(),
        total_calls: outcome.total_calls,
        parent_pool: parent_pool.iter().map(|(c, _)| c.id).collect(),
        calls: GenerationCalls::default(), // patched below once test eval ran
    });

    // Periodic test-set probe of the current best. Results are reported but
    // never feed back into parent selection.
    let due = force_test_eval
        || config
            .test_eval_every
            .map(|every| every > 0 && generation.is_multiple_of(every))
            .unwrap_or(false);
    if due && !env.splits.test.is_empty() {
        let (best, _) = hall_of_fame.first().expect("hall of fame is never empty");
        let result = evaluate_prompt(
            best,
            &env.splits.test,
            &config.target_model,
            env.task,
            env.templates,
            env.gateway,
        )?;
        let accuracy = result.accuracy();
        events.push(RunEvent::CandidateEvaluated {
            generation,
            id: best.id,
            split: Split::Test,
            correct: accuracy.correct,
            total: accuracy.total,
            llm_calls: result.llm_calls,
        });
    }

    let calls_delta = env.gateway.ledger().snapshot().since(&ledger_before);
    let calls = GenerationCalls {
        generation: calls_delta.requests(crate::gateway::Purpose::Generation),
        prediction: calls_delta.requests(crate::gateway::Purpose::Prediction),
        judging: calls_delta.requests(crate::gateway::Purpose::Judging),
    };
    for event in events.iter_mut().rev() {
        if let RunEvent::SelectionCompleted { calls: slot, .. } = event {
            *slot = calls;
            break;
        }
    }

    let population: Vec<PromptCandidate> = by_id.into_values().collect();
    Ok((
        GenerationState {
            version: checkpoint::current_version(),
            config_hash: state.config_hash.clone(),
            generation_index: generation,
            next_candidate_id: ids.next_value(),
            parent_pool,
            population,
            opro_trajectory: trajectory,
            hall_of_fame,
            ledger: env.gateway.ledger().snapshot(),
        },
        events,
    ))
}

// Successive halving cannot keep more survivors than it has candidates;
// small pools clamp the target instead of erroring out of the whole run.
fn effective_method(method: &SelectionMethod, pool_len: usize) -> SelectionMethod {
    match method {
        SelectionMethod::SuccessiveHalving(config) if config.target_survivors > pool_len => {
            let mut clamped = *config;
            clamped.target_survivors = pool_len;
            SelectionMethod::SuccessiveHalving(clamped)
        }
        other => *other,
    }
}

/// Where a run persists its artifacts; both optional for in-memory runs.
#[derive(Debug, Clone, Default)]
pub struct RunPaths {
    pub history: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: OptimizationReport,
    pub state: GenerationState,
    pub events: Vec<RunEvent>,
}

/// Execute a full optimization run: seed evaluation, `generations` rounds of
/// generate/evaluate/select, periodic test probes, a final test evaluation
/// of the best candidate, checkpoints after every generation.
pub fn run(
    env: &RunEnv,
    seed_prompt: &str,
    paths: &RunPaths,
    resume: bool,
    allow_config_mismatch: bool,
) -> Result<RunOutput, OptimizerError> {
    let config = env.config;
    config.validate()?;
    let config_hash = config.config_hash();

    let (mut state, mut events, ids);
    let resumable = resume
        && paths
            .checkpoint
            .as_ref()
            .map(|p| p.exists())
            .unwrap_or(false);
    if resumable {
        let checkpoint_path = paths.checkpoint.as_ref().expect("checked above");
        state = checkpoint_load(checkpoint_path, &config_hash, allow_config_mismatch)?;
        ids = IdAllocator::starting_at(state.next_candidate_id);
        events = match &paths.history {
            Some(history) if history.exists() => {
                truncate_after(history, state.generation_index)?
            }
            _ => Vec::new(),
        };
    } else {
        ids = IdAllocator::new();
        let (initial_state, initial_events) = initialize_run(env, seed_prompt, &ids)?;
        state = initial_state;
        events = initial_events;
        if let Some(history) = &paths.history {
            if history.exists() {
                std::fs::write(history, b"").map_err(|e| HistoryError::Io {
                    path: history.clone(),
                    message: e.to_string(),
                })?;
            }
            append_events(history, &events)?;
        }
        if let Some(checkpoint_path) = &paths.checkpoint {
            checkpoint_save(&state, checkpoint_path)?;
        }
    }

    while state.generation_index < config.generations {
        let force_test = state.generation_index + 1 == config.generations;
        let (next_state, generation_events) = run_generation(&state, env, &ids, force_test)?;
        if let Some(history) = &paths.history {
            append_events(history, &generation_events)?;
        }
        events.extend(generation_events);
        state = next_state;
        if let Some(checkpoint_path) = &paths.checkpoint {
            checkpoint_save(&state, checkpoint_path)?;
        }
    }

    // A zero-generation run still reports the seed's test performance.
    if config.generations == 0 && !env.splits.test.is_empty() {
        let (best, _) = state.hall_of_fame.first().expect("seed is in the hall of fame");
        let result = evaluate_prompt(
            best,
            &env.splits.test,
            &config.target_model,
            env.task,
            env.templates,
            env.gateway,
        )?;
        let accuracy = result.accuracy();
        let test_event = RunEvent::CandidateEvaluated {
            generation: 0,
            id: best.id,
            split: Split::Test,
            correct: accuracy.correct,
            total: accuracy.total,
            llm_calls: result.llm_calls,
        };
        if let Some(history) = &paths.history {
            append_events(history, std::slice::from_ref(&test_event))?;
        }
        events.push(test_event);
    }

    let report = build_report(&config_hash, &events);
    Ok(RunOutput {
        report,
        state,
        events,
    })
}
