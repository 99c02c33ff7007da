//! Report construction and emission. A report is a pure fold over the run's
//! event history, so every emitted number can be recomputed from the history
//! log alone. Emitted files carry no timestamps; volatile run metadata
//! belongs in a sibling file written by the caller.

use crate::domain::{CandidateId, MutationKind, Split, StrategyKind};
use crate::optimizer::events::{GenerationCalls, RunEvent};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

const REPORT_HOF_CAP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub generation: u64,
    /// Best validation score seen so far (non-decreasing by construction).
    pub best_val: f64,
    /// Mean validation score over this generation's measured candidates.
    pub mean_val: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<f64>,
    pub calls: GenerationCalls,
}

/// One (generation, strategy) cell of the improvement table: score deltas of
/// children relative to their parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyImprovementRow {
    pub generation: u64,
    pub strategy: StrategyKind,
    pub mean_improvement: f64,
    pub max_improvement: f64,
    pub child_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallOfFameEntry {
    pub id: CandidateId,
    pub generation: u64,
    pub text: String,
    pub correct: u64,
    pub total: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub id: CandidateId,
    pub generation: u64,
    pub strategy: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<MutationKind>,
    pub parent_ids: Vec<CandidateId>,
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub config_hash: String,
    pub generations: Vec<GenerationSummary>,
    pub strategy_improvements: Vec<StrategyImprovementRow>,
    pub hall_of_fame: Vec<HallOfFameEntry>,
    pub lineage: Vec<LineageEntry>,
}

impl OptimizationReport {
    pub fn final_best(&self) -> Option<&HallOfFameEntry> {
        self.hall_of_fame.first()
    }
}

struct CandidateInfo {
    text: String,
    generation: u64,
    strategy: StrategyKind,
    mutation: Option<MutationKind>,
    parent_ids: Vec<CandidateId>,
    fallback: bool,
}

fn record_best(
    best: &mut BTreeMap<CandidateId, (u64, u64)>,
    id: CandidateId,
    correct: u64,
    total: u64,
) {
    let entry = best.entry(id).or_insert((0, 0));
    let better = entry.1 == 0
        || (correct as u128) * (entry.1 as u128) > (entry.0 as u128) * (total as u128);
    if better {
        *entry = (correct, total);
    }
}

/// Fold the event stream into a report.
pub fn build_report(config_hash: &str, events: &[RunEvent]) -> OptimizationReport {
    let mut candidates: BTreeMap<CandidateId, CandidateInfo> = BTreeMap::new();
    let mut parent_pools: BTreeMap<u64, BTreeMap<CandidateId, f64>> = BTreeMap::new();
    let mut test_scores: BTreeMap<u64, f64> = BTreeMap::new();
    let mut generations: Vec<GenerationSummary> = Vec::new();
    let mut improvements: Vec<StrategyImprovementRow> = Vec::new();
    // Best measured validation accuracy per candidate, as exact counts.
    let mut best_by_candidate: BTreeMap<CandidateId, (u64, u64)> = BTreeMap::new();
    let mut last_known_score: BTreeMap<CandidateId, f64> = BTreeMap::new();
    let mut running_best = 0.0f64;

    for event in events {
        match event {
            RunEvent::GenerationStarted {
                generation,
                parent_pool,
            } => {
                parent_pools.insert(
                    *generation,
                    parent_pool
                        .iter()
                        .map(|entry| {
                            let score = if entry.total == 0 {
                                0.0
                            } else {
                                entry.correct as f64 / entry.total as f64
                            };
                            (entry.id, score)
                        })
                        .collect(),
                );
            }
            RunEvent::CandidateCreated {
                generation,
                id,
                text,
                strategy,
                mutation,
                parent_ids,
                fallback,
            } => {
                candidates.insert(
                    *id,
                    CandidateInfo {
                        text: text.clone(),
                        generation: *generation,
                        strategy: *strategy,
                        mutation: *mutation,
                        parent_ids: parent_ids.clone(),
                        fallback: *fallback,
                    },
                );
            }
            RunEvent::CandidateEvaluated {
                generation,
                id,
                split,
                correct,
                total,
                ..
            } => match split {
                Split::Test => {
                    if *total > 0 {
                        test_scores.insert(*generation, *correct as f64 / *total as f64);
                    }
                }
                Split::Validation => {
                    if *total > 0 {
                        record_best(&mut best_by_candidate, *id, *correct, *total);
                    }
                }
                Split::Train => {}
            },
            RunEvent::SelectionCompleted {
                generation,
                ranked,
                calls,
                ..
            } => {
                for entry in ranked.iter().filter(|e| e.samples_seen > 0) {
                    record_best(
                        &mut best_by_candidate,
                        entry.candidate_id,
                        entry.correct,
                        entry.samples_seen,
                    );
                }
                let measured: Vec<(CandidateId, f64)> = ranked
                    .iter()
                    .filter(|entry| entry.samples_seen > 0)
                    .map(|entry| (entry.candidate_id, entry.score()))
                    .collect();
                let mean_val = if measured.is_empty() {
                    0.0
                } else {
                    measured.iter().map(|(_, s)| s).sum::<f64>() / measured.len() as f64
                };
                if let Some(top) = measured.iter().map(|(_, s)| *s).fold(None, |acc: Option<f64>, s| {
                    Some(acc.map_or(s, |a| a.max(s)))
                }) {
                    running_best = running_best.max(top);
                }
                generations.push(GenerationSummary {
                    generation: *generation,
                    best_val: running_best,
                    mean_val,
                    test: None, // filled after the fold from test_scores
                    calls: *calls,
                });

                // Improvement deltas: child score minus parent score, both
                // from this generation's measurements when available.
                let scores_now: BTreeMap<CandidateId, f64> = measured.iter().copied().collect();
                let pool = parent_pools.get(generation);
                let mut cells: BTreeMap<StrategyKind, Vec<f64>> = BTreeMap::new();
                for (id, info) in &candidates {
                    if info.generation != *generation || info.strategy == StrategyKind::Seed {
                        continue;
                    }
                    let Some(child_score) = scores_now.get(id) else {
                        continue;
                    };
                    let parent_ref = info
                        .parent_ids
                        .iter()
                        .filter_map(|pid| {
                            pool.and_then(|p| p.get(pid))
                                .or_else(|| scores_now.get(pid))
                                .or_else(|| last_known_score.get(pid))
                                .copied()
                        })
                        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))));
                    if let Some(parent_score) = parent_ref {
                        cells
                            .entry(info.strategy)
                            .or_default()
                            .push(child_score - parent_score);
                    }
                }
                for (strategy, deltas) in cells {
                    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
                    let max = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    improvements.push(StrategyImprovementRow {
                        generation: *generation,
                        strategy,
                        mean_improvement: mean,
                        max_improvement: max,
                        child_count: deltas.len() as u64,
                    });
                }
                for (id, score) in measured {
                    last_known_score.insert(id, score);
                }
            }
        }
    }

    for summary in &mut generations {
        summary.test = test_scores.get(&summary.generation).copied();
    }

    let mut hall: Vec<HallOfFameEntry> = best_by_candidate
        .iter()
        .filter_map(|(id, (correct, total))| {
            candidates.get(id).map(|info| HallOfFameEntry {
                id: *id,
                generation: info.generation,
                text: info.text.clone(),
                correct: *correct,
                total: *total,
                score: if *total == 0 {
                    0.0
                } else {
                    *correct as f64 / *total as f64
                },
            })
        })
        .collect();
    hall.sort_by(|a, b| {
        ((b.correct as u128) * (a.total as u128))
            .cmp(&((a.correct as u128) * (b.total as u128)))
            .then(a.id.cmp(&b.id))
    });
    hall.truncate(REPORT_HOF_CAP);

    let lineage: Vec<LineageEntry> = candidates
        .iter()
        .map(|(id, info)| LineageEntry {
            id: *id,
            generation: info.generation,
            strategy: info.strategy,
            mutation: info.mutation,
            parent_ids: info.parent_ids.clone(),
            fallback: info.fallback,
        })
        .collect();

    OptimizationReport {
        config_hash: config_hash.to_string(),
        generations,
        strategy_improvements: improvements,
        hall_of_fame: hall,
        lineage,
    }
}

/// Write the plot-ready artifacts: `report.json`, `scores.csv`,
/// `strategy_improvements.csv` and `hall_of_fame.txt`. Returns the paths
/// written.
pub fn emit_report(
    report: &OptimizationReport,
    out_dir: &Path,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let report_path = out_dir.join("report.json");
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(&report_path, json)?;
    written.push(report_path);

    let scores_path = out_dir.join("scores.csv");
    {
        let mut file = std::fs::File::create(&scores_path)?;
        writeln!(file, "generation,best_val,mean_val,test")?;
        for row in &report.generations {
            let test = row
                .test
                .map(|t| format!("{t:.6}"))
                .unwrap_or_default();
            writeln!(
                file,
                "{},{:.6},{:.6},{}",
                row.generation, row.best_val, row.mean_val, test
            )?;
        }
    }
    written.push(scores_path);

    let improvements_path = out_dir.join("strategy_improvements.csv");
    {
        let mut file = std::fs::File::create(&improvements_path)?;
        writeln!(
            file,
            "generation,strategy,mean_improvement,max_improvement,child_count"
        )?;
        for row in &report.strategy_improvements {
            writeln!(
                file,
                "{},{},{:.6},{:.6},{}",
                row.generation,
                row.strategy,
                row.mean_improvement,
                row.max_improvement,
                row.child_count
            )?;
        }
    }
    written.push(improvements_path);

    let hof_path = out_dir.join("hall_of_fame.txt");
    {
        let mut file = std::fs::File::create(&hof_path)?;
        for (rank, entry) in report.hall_of_fame.iter().enumerate() {
            writeln!(
                file,
                "### rank {} | score {:.4} ({}/{}) | candidate {} | generation {}",
                rank + 1,
                entry.score,
                entry.correct,
                entry.total,
                entry.id,
                entry.generation
            )?;
            writeln!(file, "{}\n", entry.text)?;
        }
    }
    written.push(hof_path);

    Ok(written)
}
