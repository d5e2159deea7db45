//! Per-bin regulatory network inference, node statistics and snapshot
//! assembly.

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{EdgeSet, ExpressionMatrix, ExternalEmbeddings, RegulatorList};
use crate::tgraph::{build_temporal_graph, Edge, GraphError, Snapshot, TemporalGraph};

#[derive(Debug, Error)]
pub enum GrnError {
    #[error("bin has no cells")]
    EmptyBin,
    #[error("regulator list is empty")]
    NoRegulators,
    #[error("bin has {0} cells; co-expression needs at least 3")]
    BinTooSmall(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrKind {
    Pearson,
    Spearman,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrnMethod {
    Coexpression,
    Imported,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrnParams {
    pub method: GrnMethod,
    pub corr: CorrKind,
    pub min_abs_corr: Option<f64>,
    pub top_k_per_tf: Option<usize>,
    pub min_cells_expressed: usize,
}

impl Default for GrnParams {
    fn default() -> Self {
        Self {
            method: GrnMethod::Coexpression,
            corr: CorrKind::Spearman,
            min_abs_corr: Some(0.3),
            top_k_per_tf: Some(50),
            min_cells_expressed: 10,
        }
    }
}

impl GrnParams {
    pub fn validate(&self) -> Result<(), GrnError> {
        if let Some(c) = self.min_abs_corr {
            if !(c > 0.0 && c <= 1.0) {
                return Err(GrnError::InvalidParams(format!(
                    "min_abs_corr {c} outside (0, 1]"
                )));
            }
        }
        if self.top_k_per_tf == Some(0) {
            return Err(GrnError::InvalidParams("top_k_per_tf must be >= 1".into()));
        }
        if self.method == GrnMethod::Coexpression
            && self.min_abs_corr.is_none()
            && self.top_k_per_tf.is_none()
        {
            return Err(GrnError::InvalidParams(
                "co-expression needs min_abs_corr or top_k_per_tf".into(),
            ));
        }
        Ok(())
    }
}

/// Per-gene `[mean, median, population std, nonzero fraction, total]` over
/// the cells of one bin, on raw values.
pub fn node_features(expr_bin: &ExpressionMatrix) -> Result<Array2<f64>, GrnError> {
    let c = expr_bin.n_cells();
    if c == 0 {
        return Err(GrnError::EmptyBin);
    }
    let values = expr_bin.values();
    let cf = c as f64;
    let mut out = Array2::<f64>::zeros((expr_bin.n_genes(), 5));
    for (g, mut row) in out.rows_mut().into_iter().enumerate() {
        let (_, vals) = values.row(g);
        if vals.is_empty() {
            continue;
        }
        let total: f64 = vals.iter().sum();
        let mean = total / cf;
        let ss: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            + (c - vals.len()) as f64 * mean * mean;
        let mut full = vec![0.0; c - vals.len()];
        full.extend_from_slice(vals);
        full.sort_by(|a, b| a.total_cmp(b));
        let median = if c % 2 == 1 {
            full[c / 2]
        } else {
            0.5 * (full[c / 2 - 1] + full[c / 2])
        };
        let nonzero = vals.iter().filter(|&&v| v != 0.0).count();
        row[0] = mean;
        row[1] = median;
        row[2] = (ss / cf).sqrt();
        row[3] = nonzero as f64 / cf;
        row[4] = total;
    }
    Ok(out)
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = avg;
        }
        i = j;
    }
    ranks
}

/// Centres and scales to unit norm; `None` for a constant vector.
fn standardize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter_mut().for_each(|x| *x -= mean);
    let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nrm <= 1e-12 * (1.0 + mean.abs()) * n.sqrt() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= nrm);
    Some(v)
}

/// Directed TF → target edges by absolute co-expression.
///
/// Candidates are genes expressed (> 0) in at least `min_cells_expressed`
/// cells and not constant across the bin. Edges are kept when `|rho|` clears
/// `min_abs_corr`; `top_k_per_tf` then keeps the strongest targets per
/// regulator, breaking ties by gene id. Confidence is `|rho|`.
pub fn infer_coexpression_grn(
    expr_bin: &ExpressionMatrix,
    regulators: &RegulatorList,
    p: &GrnParams,
) -> Result<Vec<Edge>, GrnError> {
    p.validate()?;
    if regulators.ids.is_empty() {
        return Err(GrnError::NoRegulators);
    }
    let c = expr_bin.n_cells();
    if c < 3 {
        return Err(GrnError::BinTooSmall(c));
    }
    let n = expr_bin.n_genes();
    if let Some(&bad) = regulators.ids.iter().find(|&&id| id >= n) {
        return Err(GrnError::DimensionMismatch(format!(
            "regulator id {bad} outside vocabulary of {n}"
        )));
    }
    let values = expr_bin.values();
    let profiles: Vec<Option<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|g| {
            let (cols, vals) = values.row(g);
            let expressed = vals.iter().filter(|&&v| v > 0.0).count();
            if expressed < p.min_cells_expressed.max(1) {
                return None;
            }
            let mut dense = vec![0.0; c];
            for (&j, &v) in cols.iter().zip(vals) {
                dense[j] = v;
            }
            let dense = match p.corr {
                CorrKind::Pearson => dense,
                CorrKind::Spearman => average_ranks(&dense),
            };
            standardize(dense)
        })
        .collect();

    let per_tf: Vec<Vec<Edge>> = regulators
        .ids
        .par_iter()
        .map(|&tf| {
            let Some(x) = &profiles[tf] else {
                return Vec::new();
            };
            let mut hits: Vec<(f64, usize)> = profiles
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != tf)
                .filter_map(|(g, prof)| {
                    let y = prof.as_ref()?;
                    let rho: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                    let a = rho.abs().min(1.0);
                    match p.min_abs_corr {
                        Some(th) if a < th => None,
                        _ => Some((a, g)),
                    }
                })
                .collect();
            if let Some(k) = p.top_k_per_tf {
                hits.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                hits.truncate(k);
            }
            hits.into_iter().map(|(a, g)| Edge::new(tf, g, a)).collect()
        })
        .collect();
    Ok(per_tf.into_iter().flatten().collect())
}

/// Builds a snapshot from edges, the five base statistics and optional
/// external embeddings (appended as extra feature columns).
pub fn assemble_snapshot(
    t: usize,
    edges: Vec<Edge>,
    features: &Array2<f64>,
    embeddings: Option<&ExternalEmbeddings>,
) -> Result<Snapshot, GrnError> {
    let n = features.nrows();
    if features.ncols() != 5 {
        return Err(GrnError::DimensionMismatch(format!(
            "expected 5 base features, got {}",
            features.ncols()
        )));
    }
    if let Some(e) = edges.iter().find(|e| e.src >= n || e.dst >= n) {
        return Err(GrnError::DimensionMismatch(format!(
            "edge {} -> {} outside vocabulary of {n}",
            e.src, e.dst
        )));
    }
    let x = match embeddings {
        None => features.clone(),
        Some(emb) => {
            if emb.matrix.nrows() != n {
                return Err(GrnError::DimensionMismatch(format!(
                    "embeddings have {} rows, vocabulary has {n}",
                    emb.matrix.nrows()
                )));
            }
            concatenate(Axis(1), &[features.view(), emb.matrix.view()])
                .expect("row counts checked")
        }
    };
    Ok(Snapshot::new(t, edges, x, n)?)
}

/// Assembles the temporal graph from per-cell bin labels (1-based) and one
/// edge set per bin.
pub fn assemble_temporal_graph(
    expr: &ExpressionMatrix,
    bin_of_cell: &[usize],
    edge_sets: &[EdgeSet],
    embeddings: Option<&ExternalEmbeddings>,
) -> Result<TemporalGraph, GrnError> {
    if bin_of_cell.len() != expr.n_cells() {
        return Err(GrnError::DimensionMismatch(format!(
            "{} bin labels for {} cells",
            bin_of_cell.len(),
            expr.n_cells()
        )));
    }
    let t_max = bin_of_cell.iter().copied().max().unwrap_or(0);
    if bin_of_cell.contains(&0) {
        return Err(GrnError::DimensionMismatch("bin labels are 1-based".into()));
    }
    let mut snapshots = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let cells: Vec<usize> = (0..bin_of_cell.len()).filter(|&c| bin_of_cell[c] == t).collect();
        let sub = expr
            .select_cells(&cells)
            .map_err(|e| GrnError::DimensionMismatch(e.to_string()))?;
        let feats = node_features(&sub)?;
        let edges = edge_sets
            .iter()
            .find(|s| s.t == t)
            .map(|s| s.edges.clone())
            .unwrap_or_default();
        snapshots.push(assemble_snapshot(t, edges, &feats, embeddings)?);
    }
    if let Some(extra) = edge_sets.iter().find(|s| s.t == 0 || s.t > t_max) {
        return Err(GrnError::DimensionMismatch(format!(
            "edge set for snapshot {} but only {t_max} bins",
            extra.t
        )));
    }
    Ok(build_temporal_graph(expr.genes().clone(), snapshots)?)
}

/// Infers one edge set per bin with co-expression.
pub fn infer_all_bins(
    expr: &ExpressionMatrix,
    bin_of_cell: &[usize],
    regulators: &RegulatorList,
    p: &GrnParams,
) -> Result<Vec<EdgeSet>, GrnError> {
    let t_max = bin_of_cell.iter().copied().max().unwrap_or(0);
    (1..=t_max)
        .map(|t| {
            let cells: Vec<usize> =
                (0..bin_of_cell.len()).filter(|&c| bin_of_cell[c] == t).collect();
            let sub = expr
                .select_cells(&cells)
                .map_err(|e| GrnError::DimensionMismatch(e.to_string()))?;
            Ok(EdgeSet {
                t,
                edges: infer_coexpression_grn(&sub, regulators, p)?,
            })
        })
        .collect()
}
