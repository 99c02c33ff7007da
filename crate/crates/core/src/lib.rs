//! Evolutionary prompt optimization: a population of prompt templates is
//! grown by five generation strategies, scored against a target LLM and
//! pruned by one of three selection strategies, generation after generation.
//! A deterministic mock backend makes whole runs reproducible offline.

pub mod dataset;
pub mod domain;
pub mod evaluation;
pub mod gateway;
pub mod optimizer;
pub mod report;
pub mod strategies;
pub mod templates;

pub use dataset::{
    load_dataset, parse_label_set, split_dataset, AnswerMode, DatasetManifest, DatasetSplits,
    GoldAnswer, Sample, TaskSpec,
};
pub use domain::{
    new_candidate, Accuracy, CandidateId, EvalRecord, IdAllocator, Lineage, MetricKind,
    MutationKind, PromptCandidate, Split, StrategyKind, PLACEHOLDER,
};
pub use evaluation::{
    evaluate_prompt, extract_prediction, score_sample, BanditConfig, EvalResult, HalvingConfig,
    SelectionMethod, SelectionOutcome,
};
pub use gateway::{
    canonical_request_hash, BackendConfig, BackendKind, CallLedger, CompletionRequest,
    CompletionResponse, Gateway, LedgerSnapshot, MockOracle, ModelSpec, Purpose, RetryConfig,
    SyntheticOracle, SyntheticOracleParams,
};
pub use optimizer::{
    allocate_slots, checkpoint_load, checkpoint_save, initialize_run, run, run_generation,
    GenerationState, OproConfig, OptimizerConfig, RunEnv, RunOutput, RunPaths, StrategyWeights,
};
pub use report::{build_report, emit_report, OptimizationReport, StrategyImprovementRow};
pub use strategies::{
    apo_generate, crossover, few_shot_augment, mutate, opro_generate, pick_mutation_kind,
    ApoConfig, StrategyContext, Trajectory, TrajectoryEntry,
};
pub use templates::TemplateSet;
