//! Seeded synthetic datasets with known structure.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::ingest::{EdgeSet, ExpressionMatrix};
use crate::seed::{derive_seed, rng_from};
use crate::tgraph::{build_temporal_graph, Edge, GeneVocab, GraphError, Snapshot, TemporalGraph};

/// Feature row `[mean, median, std, nonzero fraction, total]` for a gene with
/// typical level `level`, perturbed by multiplicative noise.
fn level_features(level: f64, noise: f64, rng: &mut ChaCha8Rng) -> [f64; 5] {
    let mut jitter = || 1.0 + noise * (2.0 * rng.gen::<f64>() - 1.0);
    [
        level * jitter(),
        level * jitter(),
        0.3 * level * jitter(),
        (level / 4.0).min(1.0) * jitter().min(1.0),
        50.0 * level * jitter(),
    ]
}

fn features_from_levels(levels: &[f64], noise: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut x = Array2::zeros((levels.len(), 5));
    for (g, &l) in levels.iter().enumerate() {
        for (j, v) in level_features(l, noise, rng).into_iter().enumerate() {
            x[[g, j]] = v;
        }
    }
    x
}

fn random_edges(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let total = n * (n - 1);
    let mut pairs: Vec<(usize, usize)> = sample(rng, total, m.min(total))
        .into_iter()
        .map(|p| {
            let i = p / (n - 1);
            let j = p % (n - 1);
            (i, if j >= i { j + 1 } else { j })
        })
        .collect();
    pairs.sort_unstable();
    pairs
}

/// The same random edge set repeated in every snapshot; features vary.
pub fn fully_recurrent_graph(
    n_genes: usize,
    n_snapshots: usize,
    n_edges: usize,
    seed: u64,
) -> Result<TemporalGraph, GraphError> {
    let mut rng = rng_from(seed);
    let pairs = random_edges(n_genes, n_edges, &mut rng);
    let base: Vec<f64> = (0..n_genes).map(|_| rng.gen_range(0.5..4.0)).collect();
    let snapshots = (1..=n_snapshots)
        .map(|t| {
            let edges = pairs
                .iter()
                .map(|&(s, d)| Edge::new(s, d, rng.gen_range(0.1..1.0)))
                .collect();
            Snapshot::new(t, edges, features_from_levels(&base, 0.1, &mut rng), n_genes)
        })
        .collect::<Result<Vec<_>, _>>()?;
    build_temporal_graph(GeneVocab::numbered(n_genes)?, snapshots)
}

/// Shape of a planted-rotation graph.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationParams {
    pub n_modules: usize,
    pub module_size: usize,
    pub n_snapshots: usize,
    /// Edges re-emitted in the module two steps behind the active one.
    pub echo_edges: usize,
    pub noise: f64,
}

impl Default for RotationParams {
    fn default() -> Self {
        Self {
            n_modules: 12,
            module_size: 10,
            n_snapshots: 10,
            echo_edges: 10,
            noise: 0.05,
        }
    }
}

/// Gene modules arranged on a ring; snapshot `t` activates module
/// `(t - 1) mod M` with a dense wiring pattern and re-emits a few edges
/// from the complementary pattern in the module two steps behind. Feature
/// levels depend only on ring distance to the active module, so the
/// modules one step ahead and one step behind look alike in any single
/// snapshot and only the history tells them apart.
pub fn planted_rotation_graph(p: &RotationParams, seed: u64) -> Result<TemporalGraph, GraphError> {
    let (m, k) = (p.n_modules, p.module_size);
    if m < 5 || k < 3 {
        return Err(GraphError::DimensionMismatch(
            "rotation needs at least 5 modules of 3 genes".into(),
        ));
    }
    let n = m * k;
    let mut rng = rng_from(seed);
    let local: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let mut dense = Vec::with_capacity(m);
    let mut echo = Vec::with_capacity(m);
    for _ in 0..m {
        let mut shuffled = local.clone();
        shuffled.shuffle(&mut rng);
        let (d, rest) = shuffled.split_at(local.len() / 2);
        dense.push(d.to_vec());
        echo.push(rest[..p.echo_edges.min(rest.len())].to_vec());
    }
    let mut snapshots = Vec::with_capacity(p.n_snapshots);
    for t in 1..=p.n_snapshots {
        let active = (t - 1) % m;
        let behind = (active + m - 2) % m;
        let mut edges = Vec::new();
        for &(i, j) in &dense[active] {
            edges.push(Edge::new(active * k + i, active * k + j, rng.gen_range(0.5..1.0)));
        }
        for &(i, j) in &echo[behind] {
            edges.push(Edge::new(behind * k + i, behind * k + j, rng.gen_range(0.5..1.0)));
        }
        let levels: Vec<f64> = (0..n)
            .map(|g| {
                let md = g / k;
                let d = (md + m - active) % m;
                match d.min(m - d) {
                    0 => 4.0,
                    1 => 2.0,
                    _ => 1.0,
                }
            })
            .collect();
        let x = features_from_levels(&levels, p.noise, &mut rng);
        snapshots.push(Snapshot::new(t, edges, x, n)?);
    }
    build_temporal_graph(GeneVocab::numbered(n)?, snapshots)
}

/// Counts for cells on a noisy one-dimensional trajectory. Genes have
/// Gaussian expression bumps along the trajectory; cells are stored in a
/// shuffled order and the true positions are returned alongside.
pub fn gradient_expression(
    n_cells: usize,
    n_genes: usize,
    seed: u64,
) -> Result<(ExpressionMatrix, Vec<f64>), GraphError> {
    let mut rng = rng_from(derive_seed(seed, "gradient"));
    let mut order: Vec<usize> = (0..n_cells).collect();
    order.shuffle(&mut rng);
    let tau: Vec<f64> = order
        .iter()
        .map(|&i| i as f64 / (n_cells.max(2) - 1) as f64)
        .collect();
    let peaks: Vec<f64> = (0..n_genes)
        .map(|g| -0.2 + 1.4 * g as f64 / (n_genes.max(2) - 1) as f64)
        .collect();
    let jitter = Normal::new(0.0, 0.02).expect("valid sd");
    let mut dense = Array2::zeros((n_genes, n_cells));
    for (c, &t) in tau.iter().enumerate() {
        let pos = t + jitter.sample(&mut rng);
        for (g, &mu) in peaks.iter().enumerate() {
            let bump = (-(pos - mu).powi(2) / (2.0 * 0.2f64.powi(2))).exp();
            let lambda = 0.2 + 12.0 * bump;
            dense[[g, c]] = Poisson::new(lambda).expect("positive rate").sample(&mut rng);
        }
    }
    let cells = (0..n_cells).map(|c| format!("cell{c}")).collect();
    let expr = ExpressionMatrix::from_dense(GeneVocab::numbered(n_genes)?, cells, &dense)
        .map_err(|e| GraphError::DimensionMismatch(e.to_string()))?;
    Ok((expr, tau))
}

/// Expression, bin labels and per-bin regulatory edge lists for an
/// end-to-end run.
#[derive(Clone, Debug)]
pub struct SmokeData {
    pub expression: ExpressionMatrix,
    /// 1-based bin of every cell.
    pub bins: Vec<usize>,
    pub pseudotime: Vec<f64>,
    pub edges: Vec<EdgeSet>,
    pub regulators: Vec<usize>,
}

/// Synthetic bundle with slowly rewired regulator-to-target edges.
pub fn smoke_dataset(
    n_genes: usize,
    n_snapshots: usize,
    cells_per_bin: usize,
    seed: u64,
) -> Result<SmokeData, GraphError> {
    let mut rng = rng_from(derive_seed(seed, "smoke"));
    let n_tf = (n_genes / 5).max(2);
    let regulators: Vec<usize> = (0..n_tf).collect();
    let n_cells = n_snapshots * cells_per_bin;
    let base: Vec<f64> = (0..n_genes).map(|_| rng.gen_range(0.5..6.0)).collect();
    let phase: Vec<f64> = (0..n_genes)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    let mut dense = Array2::zeros((n_genes, n_cells));
    let mut bins = Vec::with_capacity(n_cells);
    let mut pseudotime = Vec::with_capacity(n_cells);
    for c in 0..n_cells {
        let b = c / cells_per_bin;
        let pt = (c as f64 + 0.5) / n_cells as f64;
        bins.push(b + 1);
        pseudotime.push(pt);
        for g in 0..n_genes {
            let lambda = base[g] * (1.0 + 0.6 * (std::f64::consts::TAU * pt + phase[g]).sin());
            dense[[g, c]] = Poisson::new(lambda.max(0.05))
                .expect("positive rate")
                .sample(&mut rng);
        }
    }
    let per_snapshot = 3 * n_genes / 2;
    let draw = |rng: &mut ChaCha8Rng| {
        let s = rng.gen_range(0..n_tf);
        let mut d = rng.gen_range(0..n_genes - 1);
        if d >= s {
            d += 1;
        }
        (s, d)
    };
    let mut current: Vec<(usize, usize)> = Vec::new();
    let mut edges = Vec::with_capacity(n_snapshots);
    for t in 1..=n_snapshots {
        current.retain(|_| rng.gen::<f64>() < 0.7);
        let mut seen: std::collections::HashSet<_> = current.iter().copied().collect();
        while current.len() < per_snapshot {
            let pr = draw(&mut rng);
            if seen.insert(pr) {
                current.push(pr);
            }
        }
        current.sort_unstable();
        edges.push(EdgeSet {
            t,
            edges: current
                .iter()
                .map(|&(s, d)| Edge::new(s, d, rng.gen_range(0.5..20.0)))
                .collect(),
        });
    }
    let cells = (0..n_cells).map(|c| format!("cell{c}")).collect();
    let expression = ExpressionMatrix::from_dense(GeneVocab::numbered(n_genes)?, cells, &dense)
        .map_err(|e| GraphError::DimensionMismatch(e.to_string()))?;
    Ok(SmokeData {
        expression,
        bins,
        pseudotime,
        edges,
        regulators,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tgraph::recurrence_stats;

    #[test]
    fn recurrent_graph_repeats_edges() {
        let tg = fully_recurrent_graph(100, 6, 300, 1).unwrap();
        let r = recurrence_stats(&tg).unwrap();
        assert!(r.per_snapshot.iter().all(|e| e.recurrent_fraction == 1.0));
    }

    #[test]
    fn rotation_edges_never_repeat() {
        let tg = planted_rotation_graph(&RotationParams::default(), 3).unwrap();
        assert_eq!(tg.n_genes(), 120);
        let r = recurrence_stats(&tg).unwrap();
        assert!(r.per_snapshot.iter().all(|e| e.recurrent_fraction == 0.0));
    }

    #[test]
    fn smoke_shapes() {
        let d = smoke_dataset(200, 8, 30, 0).unwrap();
        assert_eq!(d.expression.n_cells(), 240);
        assert_eq!(d.edges.len(), 8);
        assert!(d.edges.iter().all(|s| s.edges.iter().all(|e| e.src < 40)));
    }
}
