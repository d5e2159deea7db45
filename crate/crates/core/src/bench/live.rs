//! Live-update protocol: warm up on the first transitions, then for every
//! later snapshot evaluate the forecast of `t + 1` before fine-tuning on it.

use std::collections::BTreeMap;
use std::rc::Rc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auprc, precision_at_k, regression_metrics, Direction};
use super::report::{finite, hub_heatmap, EvalReport, HubHeatmap, RunRecord, StepRecord};
use super::tasks::{
    centrality_targets, expression_targets, graph_digest, sample_negatives, FeatureScaler, Task,
};
use super::BenchError;
use crate::digest::sha256_hex;
use crate::models::{EdgeBank, Family, HeadKind, Model, ModelConfig, ModelState};
use crate::nn::{Adam, AdamConfig, GraphInput, NnError, Tape, Var};
use crate::seed::{derive_seed, derive_seed_indexed, rng_from};
use crate::tgraph::{Snapshot, TemporalGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub models: Vec<Family>,
    pub tasks: Vec<Task>,
    pub seeds: Vec<u64>,
    /// Warmup trains the transitions inside snapshots `1..=t_warm`.
    pub t_warm: usize,
    pub warmup_epochs: usize,
    pub finetune_epochs: usize,
    /// Negatives per positive edge.
    pub neg_ratio: f64,
    pub k_precision: usize,
    pub heatmap_top_n: usize,
    /// Model whose centrality forecasts feed the hub heatmap; defaults to
    /// the first learned model.
    pub heatmap_model: Option<Family>,
    pub adam: AdamConfig,
    pub model: ModelConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            models: Family::ALL.to_vec(),
            tasks: Task::ALL.to_vec(),
            seeds: vec![0, 1, 2, 3, 4],
            t_warm: 2,
            warmup_epochs: 100,
            finetune_epochs: 20,
            neg_ratio: 1.0,
            k_precision: 200,
            heatmap_top_n: 20,
            heatmap_model: None,
            adam: AdamConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidConfig(m.to_string()));
        if self.models.is_empty() || self.tasks.is_empty() || self.seeds.is_empty() {
            return bad("models, tasks and seeds must be non-empty");
        }
        if self.t_warm < 1 {
            return bad("t_warm must be >= 1");
        }
        if !(self.neg_ratio > 0.0) || !self.neg_ratio.is_finite() {
            return bad("neg_ratio must be positive");
        }
        if self.k_precision == 0 || self.heatmap_top_n == 0 {
            return bad("k_precision and heatmap_top_n must be >= 1");
        }
        if !(self.adam.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        for &f in &self.models {
            if f.is_learned() {
                self.model.validate(f)?;
            }
        }
        Ok(())
    }

    /// Evaluation steps on a graph of `t` snapshots.
    pub fn n_steps(&self, t: usize) -> usize {
        t.saturating_sub(self.t_warm)
    }

    /// Digest of everything that must agree for runs to be aggregated:
    /// training protocol, architecture and the input graph.
    pub fn protocol_hash(&self, data_digest: &str) -> String {
        let v = serde_json::json!({
            "t_warm": self.t_warm,
            "warmup_epochs": self.warmup_epochs,
            "finetune_epochs": self.finetune_epochs,
            "neg_ratio": self.neg_ratio,
            "k_precision": self.k_precision,
            "adam": self.adam,
            "model": self.model,
            "data": data_digest,
        });
        sha256_hex(v.to_string().as_bytes())
    }
}

fn check_length(tg: &TemporalGraph, cfg: &BenchConfig) -> Result<(), BenchError> {
    let needed = (cfg.t_warm + 1).max(3);
    if tg.len() < needed {
        return Err(BenchError::TooFewSnapshots {
            needed,
            got: tg.len(),
        });
    }
    Ok(())
}

fn eval_link_pairs(next: &Snapshot, cfg: &BenchConfig, seed: u64, step: usize) -> (Vec<(usize, usize)>, Vec<bool>) {
    let mut pairs: Vec<(usize, usize)> = next.edges().iter().map(|e| (e.src, e.dst)).collect();
    let n_pos = pairs.len();
    let neg = sample_negatives(next, cfg.neg_ratio, derive_seed_indexed(seed, "eval-negatives", step as u64))
        .unwrap_or_default();
    pairs.extend(neg);
    let labels = (0..pairs.len()).map(|i| i < n_pos).collect();
    (pairs, labels)
}

fn link_metrics(scores: &[f64], labels: &[bool]) -> BTreeMap<String, Option<f64>> {
    BTreeMap::from([("auprc".to_string(), auprc(scores, labels).ok().and_then(finite))])
}

fn node_metrics(task: Task, pred: &[f64], cur: &Snapshot, next: &Snapshot, k: usize) -> BTreeMap<String, Option<f64>> {
    let mut m = BTreeMap::new();
    match task {
        Task::Expression => {
            let (genes, delta) = expression_targets(cur, next);
            let p: Vec<f64> = genes.iter().map(|&g| pred[g]).collect();
            let reg = regression_metrics(&p, &delta).ok();
            m.insert("pcc".into(), reg.and_then(|r| finite(r.pcc)));
            m.insert("spearman".into(), reg.and_then(|r| finite(r.spearman)));
            for (name, dir) in [("precision_up", Direction::Up), ("precision_down", Direction::Down)] {
                m.insert(name.into(), precision_at_k(&p, &delta, k, dir).ok());
            }
        }
        Task::Centrality => {
            let target = centrality_targets(next);
            let reg = regression_metrics(pred, &target).ok();
            m.insert("mae".into(), reg.and_then(|r| finite(r.mae)));
            m.insert("pcc".into(), reg.and_then(|r| finite(r.pcc)));
            m.insert("spearman".into(), reg.and_then(|r| finite(r.spearman)));
            m.insert("precision_top".into(), precision_at_k(pred, &target, k, Direction::Top).ok());
        }
        Task::Link => unreachable!("link metrics use link_metrics"),
    }
    m
}

fn missing_metrics(task: Task) -> BTreeMap<String, Option<f64>> {
    task.metric_names().iter().map(|n| (n.to_string(), None)).collect()
}

fn edgebank_run(tg: &TemporalGraph, cfg: &BenchConfig, seed: u64) -> RunRecord {
    let mut bank = EdgeBank::new();
    let mut seen_until = 0;
    let mut steps = Vec::new();
    for (i, t) in (cfg.t_warm..tg.len()).enumerate() {
        while seen_until < t {
            seen_until += 1;
            bank.update(tg.snapshot(seen_until).edges().iter().map(|e| (e.src, e.dst)));
        }
        let (pairs, labels) = eval_link_pairs(tg.snapshot(t + 1), cfg, seed, i + 1);
        let scores = bank.predict(&pairs);
        steps.push(StepRecord {
            step: i + 1,
            t,
            metrics: link_metrics(&scores, &labels),
            diverged: false,
        });
    }
    RunRecord {
        model: Family::EdgeBank.name().into(),
        task: Task::Link,
        seed,
        steps,
        centrality_predictions: Vec::new(),
    }
}

/// Inputs for every snapshot, indexed by `t - 1`.
struct Prepared {
    graphs: Vec<GraphInput<f64>>,
    xs: Vec<Array2<f64>>,
}

impl Prepared {
    fn new(tg: &TemporalGraph) -> Self {
        let scaler = FeatureScaler::fit(tg.snapshot(1).node_features());
        Self {
            graphs: tg.snapshots().iter().map(GraphInput::from_snapshot).collect(),
            xs: tg
                .snapshots()
                .iter()
                .map(|s| scaler.transform(s.node_features()))
                .collect(),
        }
    }
}

struct Trainer<'a> {
    tg: &'a TemporalGraph,
    data: &'a Prepared,
    cfg: &'a BenchConfig,
    task: Task,
    model: Model<f64>,
    opt: Adam<f64>,
    rng: ChaCha8Rng,
}

impl Trainer<'_> {
    fn loss(&mut self, tape: &Tape<f64>, p: &crate::nn::Bound, h: Var, t: usize) -> Result<Option<Var>, NnError> {
        let cur = self.tg.snapshot(t);
        let next = self.tg.snapshot(t + 1);
        match self.task {
            Task::Link => {
                let mut pairs: Vec<(usize, usize)> = next.edges().iter().map(|e| (e.src, e.dst)).collect();
                if pairs.is_empty() {
                    return Ok(None);
                }
                let n_pos = pairs.len();
                let neg_seed = self.rng.gen::<u64>();
                pairs.extend(sample_negatives(next, self.cfg.neg_ratio, neg_seed).unwrap_or_default());
                let labels = Array2::from_shape_fn((pairs.len(), 1), |(i, _)| if i < n_pos { 1.0 } else { 0.0 });
                let src = Rc::new(pairs.iter().map(|q| q.0).collect());
                let dst = Rc::new(pairs.iter().map(|q| q.1).collect());
                let logits = self.model.decode_link(tape, p, h, &src, &dst)?;
                Ok(Some(tape.bce_with_logits(logits, labels)?))
            }
            Task::Expression => {
                let (genes, delta) = expression_targets(cur, next);
                if genes.is_empty() {
                    return Ok(None);
                }
                // the loss is scale-free so that raw count units do not set the step size
                let rms = (delta.iter().map(|d| d * d).sum::<f64>() / delta.len() as f64).sqrt();
                let scale = if rms > 0.0 { rms } else { 1.0 };
                let out = self.model.decode_node(tape, p, h)?;
                let pred = tape.gather_rows(out, &Rc::new(genes))?;
                let target = tape.constant(Array2::from_shape_fn((delta.len(), 1), |(i, _)| delta[i] / scale))?;
                Ok(Some(tape.mse(pred, target)?))
            }
            Task::Centrality => {
                let target = centrality_targets(next);
                let out = self.model.decode_node(tape, p, h)?;
                let target = tape.constant(Array2::from_shape_vec((target.len(), 1), target).expect("column"))?;
                Ok(Some(tape.mse(out, target)?))
            }
        }
    }

    /// One optimizer step on transition `t -> t + 1`; returns the state
    /// produced by the pass.
    fn train_step(&mut self, t: usize, state: &ModelState<f64>) -> Result<ModelState<f64>, NnError> {
        let tape = Tape::new();
        let p = self.model.params().bind(&tape)?;
        let x = tape.constant(self.data.xs[t - 1].clone())?;
        let g = &self.data.graphs[t - 1];
        let mut drop_rng = rng_from(self.rng.gen());
        let enc = self.model.encode(&tape, &p, g, x, state, Some(&mut drop_rng))?;
        let next_state = self.model.state_after(&tape, &enc, state);
        if let Some(loss) = self.loss(&tape, &p, enc.h, t)? {
            let grads = tape.backward(loss)?;
            self.opt.step(self.model.params_mut(), &p, &grads)?;
            let finite = self.model.params().params().iter().all(|q| q.value.iter().all(|v| v.is_finite()));
            if !finite {
                return Err(NnError::Numerical("non-finite parameters after update".into()));
            }
            self.advance(t, state)?;
        }
        Ok(next_state)
    }

    fn advance(&self, t: usize, state: &ModelState<f64>) -> Result<ModelState<f64>, NnError> {
        Ok(self.model.embed(&self.data.graphs[t - 1], &self.data.xs[t - 1], state)?.1)
    }

    /// Runs `epochs` passes over transitions `ts`; on a numerical failure
    /// the model and optimizer are restored to their state before the
    /// failing pass and training stops. Returns whether that happened.
    fn train(&mut self, ts: &[usize], epochs: usize, start: &ModelState<f64>) -> Result<bool, BenchError> {
        for _ in 0..epochs {
            let mut state = start.clone();
            for &t in ts {
                let saved = (self.model.clone(), self.opt.clone());
                match self.train_step(t, &state) {
                    Ok(next) => state = next,
                    Err(NnError::Numerical(msg)) => {
                        log::warn!("{} / {}: training diverged at t={t}: {msg}", self.model.family(), self.task);
                        (self.model, self.opt) = saved;
                        return Ok(true);
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(false)
    }
}

fn neural_run(
    tg: &TemporalGraph,
    family: Family,
    task: Task,
    cfg: &BenchConfig,
    seed: u64,
    epochs: Option<(usize, usize)>,
) -> Result<(RunRecord, Model<f64>), BenchError> {
    let data = Prepared::new(tg);
    let label = format!("{}/{}", family.name(), task.name());
    let head = if task == Task::Link { HeadKind::Link } else { HeadKind::Node };
    let model = Model::new(family, &cfg.model, head, tg.feature_dim(), derive_seed(seed, &format!("init/{label}")))?;
    let mut tr = Trainer {
        tg,
        data: &data,
        cfg,
        task,
        model,
        opt: Adam::new(cfg.adam),
        rng: rng_from(derive_seed(seed, &format!("train/{label}"))),
    };
    let (warm_epochs, ft_epochs) = epochs.unwrap_or((cfg.warmup_epochs, cfg.finetune_epochs));

    let warm_ts: Vec<usize> = (1..cfg.t_warm).collect();
    tr.train(&warm_ts, warm_epochs, &ModelState::initial())?;
    let mut state = ModelState::initial();
    for t in 1..cfg.t_warm {
        state = tr.advance(t, &state)?;
    }

    let mut steps = Vec::new();
    let mut centrality_predictions = Vec::new();
    for (i, t) in (cfg.t_warm..tg.len()).enumerate() {
        let g = &data.graphs[t - 1];
        let x = &data.xs[t - 1];
        let cur = tg.snapshot(t);
        let next = tg.snapshot(t + 1);
        let metrics = match task {
            Task::Link => {
                let (pairs, labels) = eval_link_pairs(next, cfg, seed, i + 1);
                match tr.model.predict_links(g, x, &state, &pairs) {
                    Ok(scores) => link_metrics(&scores, &labels),
                    Err(NnError::Numerical(_)) => missing_metrics(task),
                    Err(e) => return Err(e.into()),
                }
            }
            _ => match tr.model.predict_nodes(g, x, &state) {
                Ok(mut pred) => {
                    if task == Task::Centrality {
                        pred.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
                        centrality_predictions.push(pred.clone());
                    }
                    node_metrics(task, &pred, cur, next, cfg.k_precision)
                }
                Err(NnError::Numerical(_)) => {
                    if task == Task::Centrality {
                        centrality_predictions.push(vec![f64::NAN; tg.n_genes()]);
                    }
                    missing_metrics(task)
                }
                Err(e) => return Err(e.into()),
            },
        };
        let diverged = tr.train(&[t], ft_epochs, &state)?;
        state = match tr.advance(t, &state) {
            Ok(s) => s,
            Err(NnError::Numerical(msg)) => {
                return Err(BenchError::Nn(NnError::Numerical(format!(
                    "state update failed at t={t}: {msg}"
                ))))
            }
            Err(e) => return Err(e.into()),
        };
        steps.push(StepRecord {
            step: i + 1,
            t,
            metrics,
            diverged,
        });
    }
    let record = RunRecord {
        model: family.name().into(),
        task,
        seed,
        steps,
        centrality_predictions,
    };
    Ok((record, tr.model))
}

/// One model family on one task under one seed.
pub fn live_update_run(
    tg: &TemporalGraph,
    family: Family,
    task: Task,
    cfg: &BenchConfig,
    seed: u64,
) -> Result<RunRecord, BenchError> {
    cfg.validate()?;
    check_length(tg, cfg)?;
    if family == Family::EdgeBank {
        if task != Task::Link {
            return Err(BenchError::InvalidConfig(
                "edgebank only forecasts links".into(),
            ));
        }
        return Ok(edgebank_run(tg, cfg, seed));
    }
    Ok(neural_run(tg, family, task, cfg, seed, None)?.0)
}

/// Like [`live_update_run`] but with explicit warmup and fine-tune epoch
/// counts, returning the trained model as well.
pub fn live_update_run_with_epochs(
    tg: &TemporalGraph,
    family: Family,
    task: Task,
    cfg: &BenchConfig,
    seed: u64,
    warmup_epochs: usize,
    finetune_epochs: usize,
) -> Result<(RunRecord, Model<f64>), BenchError> {
    cfg.validate()?;
    check_length(tg, cfg)?;
    neural_run(tg, family, task, cfg, seed, Some((warmup_epochs, finetune_epochs)))
}

/// Report plus plot data of a full benchmark.
pub struct BenchOutcome {
    pub report: EvalReport,
    pub heatmap: Option<HubHeatmap>,
    /// Final parameter archives keyed by `model/task/seed`.
    pub checkpoints: BTreeMap<String, String>,
}

/// Every configured (model, task, seed) job; edgebank runs the link task
/// only. Jobs run concurrently on the current rayon pool.
pub fn run_bench(tg: &TemporalGraph, cfg: &BenchConfig, keep_checkpoints: bool) -> Result<BenchOutcome, BenchError> {
    cfg.validate()?;
    check_length(tg, cfg)?;
    let mut jobs = Vec::new();
    for &family in &cfg.models {
        for &task in &cfg.tasks {
            if family == Family::EdgeBank && task != Task::Link {
                continue;
            }
            for &seed in &cfg.seeds {
                jobs.push((family, task, seed));
            }
        }
    }
    let results: Vec<(RunRecord, Option<String>)> = jobs
        .par_iter()
        .map(|&(family, task, seed)| {
            if family == Family::EdgeBank {
                Ok((edgebank_run(tg, cfg, seed), None))
            } else {
                let (rec, model) = neural_run(tg, family, task, cfg, seed, None)?;
                Ok((rec, keep_checkpoints.then(|| model.to_checkpoint())))
            }
        })
        .collect::<Result<_, BenchError>>()?;

    let mut checkpoints = BTreeMap::new();
    let mut runs = Vec::with_capacity(results.len());
    for (rec, ck) in results {
        if let Some(ck) = ck {
            checkpoints.insert(format!("{}/{}/{}", rec.model, rec.task, rec.seed), ck);
        }
        runs.push(rec);
    }

    let heatmap_family = cfg
        .heatmap_model
        .or_else(|| cfg.models.iter().copied().find(|f| f.is_learned()));
    let heatmap = match heatmap_family {
        Some(f) if cfg.tasks.contains(&Task::Centrality) => {
            let mine: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.model == f.name() && r.task == Task::Centrality)
                .collect();
            if mine.is_empty() {
                None
            } else {
                let n_steps = mine[0].centrality_predictions.len();
                let mean: Vec<Vec<f64>> = (0..n_steps)
                    .map(|s| {
                        (0..tg.n_genes())
                            .map(|g| {
                                let v: Vec<f64> = mine
                                    .iter()
                                    .map(|r| r.centrality_predictions[s][g])
                                    .filter(|v| v.is_finite())
                                    .collect();
                                if v.is_empty() {
                                    0.0
                                } else {
                                    v.iter().sum::<f64>() / v.len() as f64
                                }
                            })
                            .collect()
                    })
                    .collect();
                Some(hub_heatmap(&mean, cfg.heatmap_top_n)?)
            }
        }
        _ => None,
    };

    let digest = graph_digest(tg);
    let mut config = serde_json::to_value(cfg).expect("config is serializable");
    config["data_digest"] = serde_json::Value::String(digest.clone());
    let report = EvalReport::new(config, cfg.protocol_hash(&digest), runs);
    Ok(BenchOutcome {
        report,
        heatmap,
        checkpoints,
    })
}
