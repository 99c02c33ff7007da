//! Core vocabulary shared by every other module: prompt candidates, lineage,
//! strategy identifiers and exact accuracy scores.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use thiserror::Error;

/// The placeholder token every prompt template must contain exactly once.
/// The task input is substituted for it at evaluation time.
pub const PLACEHOLDER: &str = "{input}";

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("prompt text must contain the input placeholder exactly once, found {count}")]
    MissingPlaceholder { count: usize },
    #[error("prompt text is empty")]
    EmptyText,
    #[error("{strategy} lineage cannot have {parents} parent(s)")]
    InvalidLineage {
        strategy: StrategyKind,
        parents: usize,
    },
}

/// Run-unique identifier of a prompt candidate.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct CandidateId(pub u64);

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Hands out candidate ids from a run-scoped counter, so ids never collide
/// within a run and resumed runs continue the same sequence.
#[derive(Debug, Default)]
pub struct IdAllocator(AtomicU64);

impl IdAllocator {
    pub fn new() -> Self {
        Self(AtomicU64::new(0))
    }

    pub fn starting_at(next: u64) -> Self {
        Self(AtomicU64::new(next))
    }

    pub fn next_id(&self) -> CandidateId {
        CandidateId(self.0.fetch_add(1, AtomicOrdering::Relaxed))
    }

    /// Value the next allocated id will take; persisted in checkpoints.
    pub fn next_value(&self) -> u64 {
        self.0.load(AtomicOrdering::Relaxed)
    }
}

/// The candidate-producing procedures. Serialized names are stable.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Seed,
    Mutator,
    Crossover,
    FewShot,
    Apo,
    Opro,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Seed,
        StrategyKind::Mutator,
        StrategyKind::Crossover,
        StrategyKind::FewShot,
        StrategyKind::Apo,
        StrategyKind::Opro,
    ];

    /// The five strategies that generate new candidates, in tie-break order.
    pub const GENERATING: [StrategyKind; 5] = [
        StrategyKind::Mutator,
        StrategyKind::Crossover,
        StrategyKind::FewShot,
        StrategyKind::Apo,
        StrategyKind::Opro,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Seed => "seed",
            StrategyKind::Mutator => "mutator",
            StrategyKind::Crossover => "crossover",
            StrategyKind::FewShot => "few_shot",
            StrategyKind::Apo => "apo",
            StrategyKind::Opro => "opro",
        }
    }

    /// Number of parents a lineage of this strategy must carry.
    pub fn parent_arity(&self) -> usize {
        match self {
            StrategyKind::Seed => 0,
            StrategyKind::Crossover => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The eight mutation flavours the random mutator draws from.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    InstructionExpansion,
    ExpertPersona,
    StructuralVariation,
    ConstraintAddition,
    CreativeBackstory,
    TaskDecomposition,
    ConciseOptimization,
    RoleAssignment,
}

impl MutationKind {
    pub const ALL: [MutationKind; 8] = [
        MutationKind::InstructionExpansion,
        MutationKind::ExpertPersona,
        MutationKind::StructuralVariation,
        MutationKind::ConstraintAddition,
        MutationKind::CreativeBackstory,
        MutationKind::TaskDecomposition,
        MutationKind::ConciseOptimization,
        MutationKind::RoleAssignment,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MutationKind::InstructionExpansion => "instruction_expansion",
            MutationKind::ExpertPersona => "expert_persona",
            MutationKind::StructuralVariation => "structural_variation",
            MutationKind::ConstraintAddition => "constraint_addition",
            MutationKind::CreativeBackstory => "creative_backstory",
            MutationKind::TaskDecomposition => "task_decomposition",
            MutationKind::ConciseOptimization => "concise_optimization",
            MutationKind::RoleAssignment => "role_assignment",
        }
    }
}

impl fmt::Display for MutationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a candidate came to exist: producing strategy plus parent ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub strategy: StrategyKind,
    pub parent_ids: Vec<CandidateId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation_subtype: Option<MutationKind>,
}

impl Lineage {
    pub fn seed() -> Self {
        Self {
            strategy: StrategyKind::Seed,
            parent_ids: Vec::new(),
            mutation_subtype: None,
        }
    }

    pub fn mutated(parent: CandidateId, kind: MutationKind) -> Self {
        Self {
            strategy: StrategyKind::Mutator,
            parent_ids: vec![parent],
            mutation_subtype: Some(kind),
        }
    }

    pub fn crossover(a: CandidateId, b: CandidateId) -> Self {
        Self {
            strategy: StrategyKind::Crossover,
            parent_ids: vec![a, b],
            mutation_subtype: None,
        }
    }

    pub fn few_shot(parent: CandidateId) -> Self {
        Self {
            strategy: StrategyKind::FewShot,
            parent_ids: vec![parent],
            mutation_subtype: None,
        }
    }

    pub fn apo(parent: CandidateId) -> Self {
        Self {
            strategy: StrategyKind::Apo,
            parent_ids: vec![parent],
            mutation_subtype: None,
        }
    }

    pub fn opro(parent: CandidateId) -> Self {
        Self {
            strategy: StrategyKind::Opro,
            parent_ids: vec![parent],
            mutation_subtype: None,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let arity = self.strategy.parent_arity();
        if self.parent_ids.len() != arity {
            return Err(DomainError::InvalidLineage {
                strategy: self.strategy,
                parents: self.parent_ids.len(),
            });
        }
        if self.strategy == StrategyKind::Crossover && self.parent_ids[0] == self.parent_ids[1] {
            return Err(DomainError::InvalidLineage {
                strategy: self.strategy,
                parents: 1,
            });
        }
        Ok(())
    }
}

/// Which dataset partition an evaluation ran on.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        };
        f.write_str(s)
    }
}

/// Scoring rule applied when grading raw model output against a gold answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricKind {
    /// Predicted label set must equal the gold set exactly.
    StrictSetAccuracy,
    /// Normalized string equality against a single gold answer.
    ExactChoice,
    /// A judge model decides whether prediction and gold are equivalent.
    SemanticEquivalence { judge_model: String },
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::StrictSetAccuracy => "strict_set_accuracy",
            MetricKind::ExactChoice => "exact_choice",
            MetricKind::SemanticEquivalence { .. } => "semantic_equivalence",
        }
    }
}

/// Exact accuracy kept as a (correct, total) pair so rankings never suffer
/// float accumulation drift. The real-valued score is derived on demand.
/// Equality and ordering compare the exact ratio, so 1/2 equals 2/4.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
}

impl PartialEq for Accuracy {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Accuracy {}

impl Accuracy {
    pub fn new(correct: u64, total: u64) -> Self {
        debug_assert!(correct <= total);
        Self { correct, total }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    /// Pool another measurement into this one (exact rational addition of
    /// numerators and denominators).
    pub fn absorb(&mut self, other: Accuracy) {
        self.correct += other.correct;
        self.total += other.total;
    }

    pub fn is_measured(&self) -> bool {
        self.total > 0
    }

    // Unmeasured scores compare as 0/1 so they sort below any positive score.
    fn as_ratio(&self) -> (u128, u128) {
        if self.total == 0 {
            (0, 1)
        } else {
            (self.correct as u128, self.total as u128)
        }
    }
}

impl PartialOrd for Accuracy {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Accuracy {
    fn cmp(&self, other: &Self) -> Ordering {
        let (an, ad) = self.as_ratio();
        let (bn, bd) = other.as_ratio();
        (an * bd).cmp(&(bn * ad))
    }
}

impl fmt::Display for Accuracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ({}/{})", self.value(), self.correct, self.total)
    }
}

/// One scoring pass of a candidate on a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub split: Split,
    pub metric: MetricKind,
    pub correct: u64,
    pub sample_count: u64,
    pub llm_calls: u64,
    pub timestamp: u64,
}

impl EvalRecord {
    pub fn accuracy(&self) -> Accuracy {
        Accuracy::new(self.correct, self.sample_count)
    }

    pub fn score(&self) -> f64 {
        self.accuracy().value()
    }
}

/// A prompt template plus how it was produced and how it has scored so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptCandidate {
    pub id: CandidateId,
    pub text: String,
    pub generation: u64,
    pub lineage: Lineage,
    pub eval_records: Vec<EvalRecord>,
}

impl PromptCandidate {
    /// Highest score among eval records matching the split and metric.
    pub fn best_score(&self, split: Split, metric: &MetricKind) -> Option<Accuracy> {
        self.eval_records
            .iter()
            .filter(|r| r.split == split && &r.metric == metric)
            .map(|r| r.accuracy())
            .max()
    }
}

pub fn placeholder_count(text: &str) -> usize {
    text.matches(PLACEHOLDER).count()
}

/// Construct a candidate, enforcing the text and lineage invariants.
pub fn new_candidate(
    ids: &IdAllocator,
    text: impl Into<String>,
    lineage: Lineage,
    generation: u64,
) -> Result<PromptCandidate, DomainError> {
    let text = text.into();
    if text.trim().is_empty() {
        return Err(DomainError::EmptyText);
    }
    let count = placeholder_count(&text);
    if count != 1 {
        return Err(DomainError::MissingPlaceholder { count });
    }
    lineage.validate()?;
    Ok(PromptCandidate {
        id: ids.next_id(),
        text,
        generation,
        lineage,
        eval_records: Vec::new(),
    })
}

/// Generation number for a child: the loop counter is authoritative, with
/// max(parent generations)+1 as a lower bound so lineage stays a DAG.
pub fn child_generation(loop_generation: u64, parent_generations: &[u64]) -> u64 {
    let floor = parent_generations.iter().max().map_or(0, |g| g + 1);
    loop_generation.max(floor)
}
