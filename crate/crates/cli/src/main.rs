//! `promptevo` command line: run optimizations, evaluate single prompts,
//! replay recorded runs. Errors leave as machine-readable JSON on stderr
//! with stable exit codes (0 ok, 2 usage/config, 3 backend, 4 internal).

mod manifest;

use clap::{Parser, Subcommand, ValueEnum};
use manifest::RunManifest;
use promptevo::dataset::DatasetManifest;
use promptevo::evaluation::EvalError;
use promptevo::gateway::GatewayError;
use promptevo::optimizer::{CheckpointError, OptimizerError, RunEnv, RunPaths};
use promptevo::{
    domain, AnswerMode, BackendKind, Gateway, MetricKind, OptimizerConfig, SelectionMethod, Split,
    SyntheticOracle, TemplateSet,
};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

// Stdout may be a pipe that closes early (`promptevo ... | head`); dropped
// writes must not crash the run.
macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "promptevo",
    about = "Evolves task prompts against a target LLM",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendFlag {
    Http,
    Mock,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionFlag {
    /// Complete evaluation of every candidate on every sample.
    All,
    /// Successive halving.
    Sh,
    /// UCB-E bandit.
    Bandit,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitFlag {
    Train,
    Validation,
    Test,
}

impl From<SplitFlag> for Split {
    fn from(value: SplitFlag) -> Self {
        match value {
            SplitFlag::Train => Split::Train,
            SplitFlag::Validation => Split::Validation,
            SplitFlag::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricFlag {
    Strict,
    Choice,
    Semantic,
}

#[derive(Subcommand)]
enum Command {
    /// Run an optimization described by a run manifest.
    Optimize {
        #[arg(long)]
        manifest: PathBuf,
        /// Override the manifest's backend kind.
        #[arg(long, value_enum)]
        backend: Option<BackendFlag>,
        /// Override the optimizer seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Resume from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Accept a checkpoint written under a different config hash.
        #[arg(long)]
        allow_config_mismatch: bool,
        /// Override the manifest's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        generations: Option<u64>,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long, value_enum)]
        selection: Option<SelectionFlag>,
    },
    /// Score one prompt template on a dataset split.
    Evaluate {
        /// File holding a single prompt template.
        #[arg(long)]
        prompt: PathBuf,
        /// Dataset manifest path.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitFlag,
        /// Override the dataset's metric.
        #[arg(long, value_enum)]
        metric: Option<MetricFlag>,
        /// Judge model for the semantic metric.
        #[arg(long)]
        judge_model: Option<String>,
        #[arg(long, value_enum)]
        backend: Option<BackendFlag>,
        /// Directory for the evaluation report.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

struct CliError {
    code: &'static str,
    exit: u8,
    message: String,
}

impl CliError {
    fn usage(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            exit: 2,
            message: message.into(),
        }
    }

    fn backend(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            exit: 3,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            code: "INTERNAL",
            exit: 4,
            message: message.into(),
        }
    }
}

fn gateway_error(err: GatewayError) -> CliError {
    match err {
        GatewayError::InvalidConfig(_) | GatewayError::InvalidRequest(_) => {
            CliError::usage("BACKEND_CONFIG_INVALID", err.to_string())
        }
        GatewayError::ReplayMiss { .. } => CliError::backend("REPLAY_MISS", err.to_string()),
        GatewayError::Auth(_) => CliError::backend("BACKEND_AUTH", err.to_string()),
        _ => CliError::backend("BACKEND_UNAVAILABLE", err.to_string()),
    }
}

fn optimizer_error(err: OptimizerError) -> CliError {
    match err {
        OptimizerError::InvalidConfig(message) => CliError::usage("CONFIG_INVALID", message),
        OptimizerError::Checkpoint(inner) => match inner {
            CheckpointError::ConfigMismatch { .. } => {
                CliError::usage("CHECKPOINT_CONFIG_MISMATCH", inner.to_string())
            }
            _ => CliError::usage("CHECKPOINT_INVALID", inner.to_string()),
        },
        OptimizerError::Eval(EvalError::Gateway(inner)) => gateway_error(inner),
        OptimizerError::AllStrategiesFailed(message) => {
            CliError::backend("ALL_STRATEGIES_FAILED", message)
        }
        other => CliError::internal(other.to_string()),
    }
}

fn emit_error(err: &CliError) {
    let body = serde_json::json!({
        "error": { "code": err.code, "message": err.message }
    });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimize {
            manifest,
            backend,
            seed,
            resume,
            allow_config_mismatch,
            out,
            generations,
            population,
            selection,
        } => cmd_optimize(
            &manifest,
            backend,
            seed,
            resume,
            allow_config_mismatch,
            out,
            generations,
            population,
            selection,
        ),
        Command::Evaluate {
            prompt,
            dataset,
            split,
            metric,
            judge_model,
            backend,
            out,
        } => cmd_evaluate(&prompt, &dataset, split.into(), metric, judge_model, backend, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            emit_error(&err);
            ExitCode::from(err.exit)
        }
    }
}

fn build_gateway(
    manifest: &RunManifest,
    dataset: &promptevo::DatasetSplits,
    task: &promptevo::TaskSpec,
) -> Result<Gateway, CliError> {
    let backend = &manifest.backend;
    let oracle = match backend.kind {
        BackendKind::Mock => Some(Arc::new(SyntheticOracle::with_dataset(
            backend.synthetic.clone(),
            dataset.all_samples().cloned().collect::<Vec<_>>(),
            task,
        )) as Arc<dyn promptevo::MockOracle>),
        _ => None,
    };
    Gateway::from_config(backend.clone(), oracle).map_err(gateway_error)
}

#[derive(Serialize)]
struct RunMeta {
    started_at_unix: u64,
    duration_ms: u128,
    backend: BackendKind,
    seed: u64,
    generations: u64,
    population_size: usize,
    ledger: promptevo::LedgerSnapshot,
    artifacts: Vec<PathBuf>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_optimize(
    manifest_path: &Path,
    backend: Option<BackendFlag>,
    seed: Option<u64>,
    resume: bool,
    allow_config_mismatch: bool,
    out: Option<PathBuf>,
    generations: Option<u64>,
    population: Option<usize>,
    selection: Option<SelectionFlag>,
) -> Result<(), CliError> {
    let started_at = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let timer = Instant::now();

    let mut manifest = RunManifest::load(manifest_path)
        .map_err(|message| CliError::usage("MANIFEST_INVALID", message))?;
    if let Some(out) = out {
        manifest.output_dir = out;
    }
    manifest
        .validate()
        .map_err(|message| CliError::usage("MANIFEST_INVALID", message))?;

    // Flag overrides.
    if let Some(backend) = backend {
        manifest.backend.kind = match backend {
            BackendFlag::Http => BackendKind::Http,
            BackendFlag::Mock => BackendKind::Mock,
            BackendFlag::Replay => BackendKind::Replay,
        };
    }
    if let Some(seed) = seed {
        manifest.config.seed = seed;
    }
    if let Some(generations) = generations {
        manifest.config.generations = generations;
    }
    if let Some(population) = population {
        manifest.config.population_size = population;
        manifest.config.parent_pool_size = manifest.config.parent_pool_size.min(population);
    }
    if let Some(selection) = selection {
        manifest.config.selection = match selection {
            SelectionFlag::All => SelectionMethod::Complete,
            SelectionFlag::Sh => {
                SelectionMethod::SuccessiveHalving(promptevo::HalvingConfig::default())
            }
            SelectionFlag::Bandit => SelectionMethod::Bandit(promptevo::BanditConfig::default()),
        };
    }

    std::fs::create_dir_all(&manifest.output_dir)
        .map_err(|e| CliError::usage("MANIFEST_INVALID", format!("output dir: {e}")))?;
    if manifest.backend.cache_path.is_none() {
        manifest.backend.cache_path = Some(manifest.output_dir.join("llm_cache.ldjson"));
    }

    let dataset_manifest = DatasetManifest::load(&manifest.dataset_manifest)
        .map_err(|e| CliError::usage("DATASET_INVALID", e.to_string()))?;
    let dataset_dir = manifest
        .dataset_manifest
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let task = dataset_manifest.task_spec();
    let splits = dataset_manifest
        .load_splits(&dataset_dir)
        .map_err(|e| CliError::usage("DATASET_INVALID", e.to_string()))?;

    let seed_prompt = std::fs::read_to_string(&manifest.seed_prompt_file)
        .map_err(|e| CliError::usage("MANIFEST_INVALID", format!("seed prompt: {e}")))?;
    let seed_prompt = seed_prompt.trim();
    if domain::placeholder_count(seed_prompt) != 1 {
        return Err(CliError::usage(
            "PROMPT_INVALID",
            format!(
                "seed prompt must contain the {} placeholder exactly once",
                promptevo::PLACEHOLDER
            ),
        ));
    }

    let templates = match &manifest.template_dir {
        Some(dir) => TemplateSet::with_overrides_from(dir)
            .map_err(|e| CliError::usage("MANIFEST_INVALID", e.to_string()))?,
        None => TemplateSet::builtin(),
    };
    let gateway = build_gateway(&manifest, &splits, &task)?;

    let env = RunEnv {
        config: &manifest.config,
        task: &task,
        splits: &splits,
        templates: &templates,
        gateway: &gateway,
    };
    let paths = RunPaths {
        history: Some(manifest.output_dir.join("history.ldjson")),
        checkpoint: Some(manifest.output_dir.join("checkpoint.json")),
    };
    let output = promptevo::optimizer::run(&env, seed_prompt, &paths, resume, allow_config_mismatch)
        .map_err(optimizer_error)?;

    let mut artifacts = promptevo::emit_report(&output.report, &manifest.output_dir)
        .map_err(|e| CliError::internal(e.to_string()))?;
    artifacts.push(paths.history.clone().expect("set above"));
    artifacts.push(paths.checkpoint.clone().expect("set above"));

    let meta = RunMeta {
        started_at_unix: started_at,
        duration_ms: timer.elapsed().as_millis(),
        backend: manifest.backend.kind,
        seed: manifest.config.seed,
        generations: manifest.config.generations,
        population_size: manifest.config.population_size,
        ledger: gateway.ledger().snapshot(),
        artifacts: artifacts.clone(),
    };
    let meta_path = manifest.output_dir.join("run_meta.json");
    std::fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n",
    )
    .map_err(|e| CliError::internal(e.to_string()))?;

    if let Some(best) = output.report.final_best() {
        outln!(
            "best candidate {} (generation {}): validation {:.4} ({}/{})",
            best.id, best.generation, best.score, best.correct, best.total
        );
        if let Some(test) = output
            .report
            .generations
            .last()
            .and_then(|row| row.test)
        {
            outln!("final test score: {test:.4}");
        }
    }
    outln!("artifacts written to {}", manifest.output_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct EvaluationReport {
    prompt_file: PathBuf,
    dataset: String,
    split: Split,
    metric: MetricKind,
    accuracy: f64,
    correct: u64,
    sample_count: u64,
    llm_calls: u64,
    per_sample: Vec<promptevo::evaluation::SampleOutcome>,
}

fn cmd_evaluate(
    prompt_path: &Path,
    dataset_path: &Path,
    split: Split,
    metric: Option<MetricFlag>,
    judge_model: Option<String>,
    backend: Option<BackendFlag>,
    out: &Path,
) -> Result<(), CliError> {
    let dataset_manifest = DatasetManifest::load(dataset_path)
        .map_err(|e| CliError::usage("DATASET_INVALID", e.to_string()))?;
    let dataset_dir = dataset_path.parent().unwrap_or_else(|| Path::new("."));
    let mut task = dataset_manifest.task_spec();
    let splits = dataset_manifest
        .load_splits(dataset_dir)
        .map_err(|e| CliError::usage("DATASET_INVALID", e.to_string()))?;

    if let Some(metric) = metric {
        task.metric = match metric {
            MetricFlag::Strict => MetricKind::StrictSetAccuracy,
            MetricFlag::Choice => MetricKind::ExactChoice,
            MetricFlag::Semantic => MetricKind::SemanticEquivalence {
                judge_model: judge_model.clone().ok_or_else(|| {
                    CliError::usage("METRIC_MISMATCH", "semantic metric needs --judge-model")
                })?,
            },
        };
    }
    let mode_ok = matches!(
        (&task.metric, task.answer_mode),
        (MetricKind::StrictSetAccuracy, AnswerMode::Multilabel)
            | (
                MetricKind::ExactChoice | MetricKind::SemanticEquivalence { .. },
                AnswerMode::Choice
            )
    );
    if !mode_ok {
        return Err(CliError::usage(
            "METRIC_MISMATCH",
            format!(
                "metric {} cannot grade {} answers",
                task.metric.name(),
                match task.answer_mode {
                    AnswerMode::Multilabel => "multilabel",
                    AnswerMode::Choice => "choice",
                }
            ),
        ));
    }

    let samples = splits.split(split);
    if samples.is_empty() {
        return Err(CliError::usage(
            "EMPTY_SPLIT",
            format!("split {split} holds no samples"),
        ));
    }

    let prompt_text = std::fs::read_to_string(prompt_path)
        .map_err(|e| CliError::usage("PROMPT_INVALID", e.to_string()))?;
    let prompt_text = prompt_text.trim();
    if domain::placeholder_count(prompt_text) != 1 {
        return Err(CliError::usage(
            "PROMPT_INVALID",
            format!(
                "prompt must contain the {} placeholder exactly once",
                promptevo::PLACEHOLDER
            ),
        ));
    }

    let run_manifest = RunManifest {
        dataset_manifest: dataset_path.to_path_buf(),
        seed_prompt_file: prompt_path.to_path_buf(),
        output_dir: out.to_path_buf(),
        backend: {
            let mut config = promptevo::BackendConfig::mock();
            if let Some(flag) = backend {
                config.kind = match flag {
                    BackendFlag::Http => BackendKind::Http,
                    BackendFlag::Mock => BackendKind::Mock,
                    BackendFlag::Replay => BackendKind::Replay,
                };
            }
            config
        },
        config: OptimizerConfig::default(),
        template_dir: None,
    };
    let gateway = build_gateway(&run_manifest, &splits, &task)?;

    let ids = promptevo::IdAllocator::new();
    let candidate = promptevo::new_candidate(&ids, prompt_text, promptevo::Lineage::seed(), 0)
        .map_err(|e| CliError::usage("PROMPT_INVALID", e.to_string()))?;
    let templates = TemplateSet::builtin();
    let result = promptevo::evaluate_prompt(
        &candidate,
        samples,
        &run_manifest.config.target_model,
        &task,
        &templates,
        &gateway,
    )
    .map_err(|e| match e {
        EvalError::Gateway(inner) => gateway_error(inner),
        other => CliError::internal(other.to_string()),
    })?;

    let accuracy = result.accuracy();
    outln!(
        "accuracy {:.4} ({}/{}) on {} split of {}",
        accuracy.value(),
        accuracy.correct,
        accuracy.total,
        split,
        task.name
    );
    for outcome in &result.per_sample {
        let mark = if outcome.failed {
            "ERROR"
        } else if outcome.correct {
            "ok"
        } else {
            "MISS"
        };
        outln!("  [{mark}] {}", outcome.sample_id);
    }

    std::fs::create_dir_all(out).map_err(|e| CliError::internal(e.to_string()))?;
    let report = EvaluationReport {
        prompt_file: prompt_path.to_path_buf(),
        dataset: task.name.clone(),
        split,
        metric: task.metric.clone(),
        accuracy: accuracy.value(),
        correct: accuracy.correct,
        sample_count: accuracy.total,
        llm_calls: result.llm_calls,
        per_sample: result.per_sample,
    };
    let path = out.join("eval_result.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    )
    .map_err(|e| CliError::internal(e.to_string()))?;
    outln!("evaluation report written to {}", path.display());
    Ok(())
}
