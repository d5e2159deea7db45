//! Evaluation reports, seed aggregation and plot-data export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{top_k_indices, Direction};
use super::tasks::Task;
use super::BenchError;
use crate::tgraph::{GeneVocab, RecurrenceSeries};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Metrics of one evaluation step; `None` marks a missing (undefined)
/// value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Last observed snapshot; the step predicts `t + 1`.
    pub t: usize,
    pub metrics: BTreeMap<String, Option<f64>>,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub task: Task,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    /// Clamped centrality predictions per step (centrality task only).
    #[serde(skip)]
    pub centrality_predictions: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model: String,
    pub task: Task,
    pub metric: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_seeds: usize,
    pub seed_means: Vec<Option<f64>>,
    pub missing_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

pub(crate) fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Mean and sample standard deviation (`n - 1`; 0 for one value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

fn compute_aggregates(runs: &[RunRecord]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, Task, String), Vec<(Option<f64>, usize)>> = BTreeMap::new();
    for run in runs {
        let mut names: Vec<&String> = run.steps.iter().flat_map(|s| s.metrics.keys()).collect();
        names.sort();
        names.dedup();
        for name in names {
            let vals: Vec<f64> = run
                .steps
                .iter()
                .filter_map(|s| s.metrics.get(name).copied().flatten())
                .collect();
            let missing = run.steps.len() - vals.len();
            let seed_mean = mean_std(&vals).map(|m| m.0);
            groups
                .entry((run.model.clone(), run.task, name.clone()))
                .or_default()
                .push((seed_mean, missing));
        }
    }
    groups
        .into_iter()
        .map(|((model, task, metric), per_seed)| {
            let present: Vec<f64> = per_seed.iter().filter_map(|p| p.0).collect();
            let ms = mean_std(&present);
            Aggregate {
                model,
                task,
                metric,
                mean: ms.map(|m| m.0),
                std: ms.map(|m| m.1),
                n_seeds: per_seed.len(),
                seed_means: per_seed.iter().map(|p| p.0).collect(),
                missing_steps: per_seed.iter().map(|p| p.1).sum(),
            }
        })
        .collect()
}

impl EvalReport {
    pub fn new(config: serde_json::Value, config_hash: String, mut runs: Vec<RunRecord>) -> Self {
        runs.sort_by(|a, b| (&a.model, a.task, a.seed).cmp(&(&b.model, b.task, b.seed)));
        let aggregates = compute_aggregates(&runs);
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            config,
            config_hash,
            runs,
            aggregates,
        }
    }

    pub fn aggregate(&self, model: &str, task: Task, metric: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.model == model && a.task == task && a.metric == metric)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let r: Self = serde_json::from_str(text).map_err(|e| BenchError::Schema(e.to_string()))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(BenchError::Schema(format!(
                "report schema version {} (expected {REPORT_SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        Ok(r)
    }

    /// Per-step means across seeds: `step,t,<model>.<metric>,...`.
    pub fn trend_csv(&self, task: Task) -> String {
        let mut columns: Vec<(String, String)> = Vec::new();
        let mut steps: BTreeMap<usize, usize> = BTreeMap::new();
        for run in self.runs.iter().filter(|r| r.task == task) {
            for s in &run.steps {
                steps.insert(s.step, s.t);
                for m in s.metrics.keys() {
                    let key = (run.model.clone(), m.clone());
                    if !columns.contains(&key) {
                        columns.push(key);
                    }
                }
            }
        }
        let mut out = String::from("step,t");
        for (model, metric) in &columns {
            let _ = write!(out, ",{model}.{metric}");
        }
        out.push('\n');
        for (&step, &t) in &steps {
            let _ = write!(out, "{step},{t}");
            for (model, metric) in &columns {
                let vals: Vec<f64> = self
                    .runs
                    .iter()
                    .filter(|r| r.task == task && &r.model == model)
                    .filter_map(|r| r.steps.iter().find(|s| s.step == step))
                    .filter_map(|s| s.metrics.get(metric).copied().flatten())
                    .collect();
                match mean_std(&vals) {
                    Some((m, _)) => {
                        let _ = write!(out, ",{m}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Text table of aggregates.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:<11} {:<15} {:>10} {:>10} {:>6}", "model", "task", "metric", "mean", "std", "seeds");
        for a in &self.aggregates {
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
            let _ = writeln!(
                out,
                "{:<12} {:<11} {:<15} {:>10} {:>10} {:>6}",
                a.model,
                a.task.name(),
                a.metric,
                fmt(a.mean),
                fmt(a.std),
                a.n_seeds
            );
        }
        out
    }
}

/// Merges per-seed (or per-model) fragments produced under one
/// configuration.
pub fn aggregate_report(fragments: Vec<EvalReport>) -> Result<EvalReport, BenchError> {
    let first = fragments.first().ok_or(BenchError::EmptyInput)?;
    let hash = first.config_hash.clone();
    let config = first.config.clone();
    if let Some(bad) = fragments.iter().find(|f| f.config_hash != hash) {
        return Err(BenchError::ConfigMismatch {
            expected: hash,
            found: bad.config_hash.clone(),
        });
    }
    let mut runs: Vec<RunRecord> = Vec::new();
    for f in fragments {
        for r in f.runs {
            if runs
                .iter()
                .any(|x| x.model == r.model && x.task == r.task && x.seed == r.seed)
            {
                return Err(BenchError::Schema(format!(
                    "duplicate run {} / {} / seed {}",
                    r.model, r.task, r.seed
                )));
            }
            runs.push(r);
        }
    }
    Ok(EvalReport::new(config, hash, runs))
}

/// Genes with the highest predicted centrality at any step, with their full
/// predicted profiles.
#[derive(Clone, Debug, PartialEq)]
pub struct HubHeatmap {
    pub genes: Vec<usize>,
    /// `genes.len() × steps`.
    pub values: Vec<Vec<f64>>,
}

/// `per_step[s][g]` is the prediction for gene `g` at step `s`.
pub fn hub_heatmap(per_step: &[Vec<f64>], top_n: usize) -> Result<HubHeatmap, BenchError> {
    if per_step.is_empty() || per_step[0].is_empty() {
        return Err(BenchError::EmptySeries);
    }
    let n = per_step[0].len();
    if per_step.iter().any(|s| s.len() != n) {
        return Err(BenchError::LengthMismatch {
            left: n,
            right: per_step.iter().map(Vec::len).find(|&l| l != n).unwrap_or(0),
        });
    }
    let peak: Vec<f64> = (0..n)
        .map(|g| per_step.iter().map(|s| s[g]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let genes = top_k_indices(&peak, top_n.min(n), Direction::Top);
    let values = genes
        .iter()
        .map(|&g| per_step.iter().map(|s| s[g]).collect())
        .collect();
    Ok(HubHeatmap { genes, values })
}

impl HubHeatmap {
    pub fn to_csv(&self, vocab: &GeneVocab) -> String {
        let steps = self.values.first().map_or(0, Vec::len);
        let mut out = String::from("gene");
        for s in 1..=steps {
            let _ = write!(out, ",step_{s}");
        }
        out.push('\n');
        for (&g, row) in self.genes.iter().zip(&self.values) {
            out.push_str(vocab.symbol(g));
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn recurrence_csv(series: &RecurrenceSeries) -> String {
    let mut out = String::from("t,recurrent_fraction,new_fraction\n");
    for e in &series.per_snapshot {
        let _ = writeln!(out, "{},{},{}", e.t, e.recurrent_fraction, e.new_fraction);
    }
    out
}

/// Writes `report.json` and one `trend_<task>.csv` per task present.
pub fn write_report_files(report: &EvalReport, dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report.to_json())?;
    let mut tasks: Vec<Task> = report.runs.iter().map(|r| r.task).collect();
    tasks.sort();
    tasks.dedup();
    for task in tasks {
        fs::write(dir.join(format!("trend_{}.csv", task.name())), report.trend_csv(task))?;
    }
    Ok(())
}
