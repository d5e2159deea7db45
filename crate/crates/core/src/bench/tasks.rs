//! Forecasting targets, negative sampling and model inputs.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::digest::ChunkHasher;
use crate::seed::rng_from;
use crate::tgraph::{out_degree_centrality, Snapshot, TemporalGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Link,
    Expression,
    Centrality,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Link, Task::Expression, Task::Centrality];

    pub fn name(self) -> &'static str {
        match self {
            Task::Link => "link",
            Task::Expression => "expression",
            Task::Centrality => "centrality",
        }
    }

    /// Metric names recorded for every evaluation step, in report order.
    pub fn metric_names(self) -> &'static [&'static str] {
        match self {
            Task::Link => &["auprc"],
            Task::Expression => &["pcc", "spearman", "precision_up", "precision_down"],
            Task::Centrality => &["mae", "pcc", "spearman", "precision_top"],
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| BenchError::InvalidConfig(format!("unknown task {s:?}")))
    }
}

/// Uniform sample without replacement of `round(ratio * |E|)` ordered pairs
/// of distinct genes active in `snapshot` that are not edges of it.
pub fn sample_negatives(snapshot: &Snapshot, ratio: f64, seed: u64) -> Result<Vec<(usize, usize)>, BenchError> {
    let active = snapshot.active_nodes();
    let want = (ratio * snapshot.edges().len() as f64).round() as usize;
    if want == 0 {
        return Ok(Vec::new());
    }
    let a = active.len();
    let total = a * a.saturating_sub(1);
    let edges = snapshot.edge_set();
    let feasible = total - edges.len();
    if feasible == 0 {
        return Err(BenchError::NoNegativesAvailable);
    }
    let mut rng = rng_from(seed);
    // pair index p in [0, a(a-1)) maps to (i, j) with j skipping i
    let decode = |p: usize| {
        let i = p / (a - 1);
        let mut j = p % (a - 1);
        if j >= i {
            j += 1;
        }
        (active[i], active[j])
    };
    if feasible <= want {
        log::warn!("only {feasible} negatives available, {want} requested");
        return Ok((0..total)
            .map(decode)
            .filter(|pr| !edges.contains(pr))
            .collect());
    }
    if total <= 4 * want + 1024 {
        let pool: Vec<(usize, usize)> = (0..total)
            .map(decode)
            .filter(|pr| !edges.contains(pr))
            .collect();
        let mut picked: Vec<(usize, usize)> = sample(&mut rng, pool.len(), want)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        picked.sort_unstable();
        return Ok(picked);
    }
    let mut seen = HashSet::with_capacity(want);
    let mut out = Vec::with_capacity(want);
    while out.len() < want {
        let pr = decode(rng.gen_range(0..total));
        if !edges.contains(&pr) && seen.insert(pr) {
            out.push(pr);
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Genes active in both snapshots.
pub fn evaluable_genes(cur: &Snapshot, next: &Snapshot) -> Vec<usize> {
    let (a, b) = (cur.active_mask(), next.active_mask());
    (0..a.len()).filter(|&g| a[g] && b[g]).collect()
}

/// `Δx = x^(t+1) - x^(t)` of mean expression on the evaluable genes.
pub fn expression_targets(cur: &Snapshot, next: &Snapshot) -> (Vec<usize>, Vec<f64>) {
    let genes = evaluable_genes(cur, next);
    let (xa, xb) = (cur.mean_expression(), next.mean_expression());
    let delta = genes.iter().map(|&g| xb[g] - xa[g]).collect();
    (genes, delta)
}

/// Out-degree centrality of every gene in `next`.
pub fn centrality_targets(next: &Snapshot) -> Vec<f64> {
    out_degree_centrality(next, next.n_nodes()).expect("snapshot sized to its vocabulary")
}

/// Model input transform: signed `log1p`, then per-column z-scores using the
/// statistics of the first snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScaler {
    mean: Vec<f64>,
    std: Vec<f64>,
}

fn slog(v: f64) -> f64 {
    v.signum() * v.abs().ln_1p()
}

impl FeatureScaler {
    pub fn fit(reference: &Array2<f64>) -> Self {
        let n = reference.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(reference.ncols());
        let mut std = Vec::with_capacity(reference.ncols());
        for col in reference.columns() {
            let vals: Vec<f64> = col.iter().map(|&v| slog(v)).collect();
            let m = vals.iter().sum::<f64>() / n;
            let s = (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            mean.push(m);
            std.push(if s > 1e-12 { s } else { 1.0 });
        }
        Self { mean, std }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        Array2::from_shape_fn(x.dim(), |(i, j)| (slog(x[[i, j]]) - self.mean[j]) / self.std[j])
    }
}

/// Content digest of a temporal graph (vocabulary, edges, features).
pub fn graph_digest(tg: &TemporalGraph) -> String {
    let mut h = ChunkHasher::new();
    for s in tg.vocab().symbols() {
        h.chunk(s.as_bytes());
    }
    for snap in tg.snapshots() {
        h.chunk(format!("snapshot {}", snap.t()).as_bytes());
        for e in snap.edges() {
            h.chunk(format!("{} {} {}", e.src, e.dst, e.confidence.to_bits()).as_bytes());
        }
        let bits: Vec<u8> = snap
            .node_features()
            .iter()
            .flat_map(|v| v.to_bits().to_le_bytes())
            .collect();
        h.chunk(&bits);
    }
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tgraph::Edge;

    fn snap(n: usize, edges: &[(usize, usize)]) -> Snapshot {
        Snapshot::new(
            1,
            edges.iter().map(|&(s, d)| Edge::new(s, d, 1.0)).collect(),
            Array2::zeros((n, 5)),
            n,
        )
        .unwrap()
    }

    #[test]
    fn saturated_graph_has_no_negatives() {
        let s = snap(3, &[(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)]);
        assert!(matches!(
            sample_negatives(&s, 1.0, 0),
            Err(BenchError::NoNegativesAvailable)
        ));
    }

    #[test]
    fn negatives_respect_constraints() {
        let s = snap(6, &[(0, 1), (2, 3)]);
        let neg = sample_negatives(&s, 1.0, 4).unwrap();
        assert_eq!(neg.len(), 2);
        let active = s.active_mask();
        for &(i, j) in &neg {
            assert!(active[i] && active[j] && i != j);
            assert!(!s.edge_set().contains(&(i, j)));
        }
        assert_eq!(neg, sample_negatives(&s, 1.0, 4).unwrap());
    }
}
