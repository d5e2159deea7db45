//! Diffusion pseudotime and pseudotime binning.
//!
//! Pipeline: library-size normalization, `log1p`, per-gene centering and PCA
//! ([`preprocess`]); adaptive-bandwidth Gaussian kNN kernel
//! ([`knn_affinity`]); density-normalized diffusion operator and diffusion
//! pseudotime ([`diffusion_pseudotime`]); equal-frequency binning
//! ([`bin_cells`]).

use std::collections::VecDeque;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::ExpressionMatrix;
use crate::linalg::{top_eigenpairs, LinalgError};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("k = {k} must be below the number of cells {cells}")]
    KTooLarge { k: usize, cells: usize },
    #[error("root cell {0} has no neighbours in the affinity graph")]
    DisconnectedRoot(usize),
    #[error("eigen-solver failure: {0}")]
    EigSolverFailure(String),
    #[error("{cells} cells cannot fill two bins of at least {min_cells}")]
    TooFewCells { cells: usize, min_cells: usize },
}

impl From<LinalgError> for TrajectoryError {
    fn from(e: LinalgError) -> Self {
        TrajectoryError::EigSolverFailure(e.to_string())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryParams {
    pub n_pcs: usize,
    pub k: usize,
    pub n_components: usize,
    pub root: Option<usize>,
    pub seed: u64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            n_pcs: 50,
            k: 15,
            n_components: 10,
            root: None,
            seed: 0,
        }
    }
}

/// Principal components of the normalized, centered expression.
#[derive(Clone, Debug)]
pub struct Pca {
    /// Cells × components.
    pub scores: Array2<f64>,
    /// Genes × components, unit-norm columns.
    pub loadings: Array2<f64>,
    /// Variance captured by each component.
    pub variances: Vec<f64>,
    pub requested: usize,
}

impl Pca {
    pub fn n_components(&self) -> usize {
        self.variances.len()
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Normalized log expression as a genes × cells sparse matrix plus gene means.
fn normalized_log(expr: &ExpressionMatrix) -> Result<(CsrMatrix<f64>, Vec<f64>), TrajectoryError> {
    let lib = expr.library_sizes();
    let mut positive: Vec<f64> = lib.iter().copied().filter(|&v| v > 0.0).collect();
    if positive.is_empty() {
        return Err(TrajectoryError::DegenerateInput(
            "all cells have zero total counts".into(),
        ));
    }
    let mut all = lib.clone();
    let mut target = median(&mut all);
    if target <= 0.0 {
        target = median(&mut positive);
    }
    let c = expr.n_cells() as f64;
    let y = expr
        .values()
        .map_values(|_, cell, v| (v * target / lib[cell]).ln_1p());
    let means = y.row_sums().into_iter().map(|s| s / c).collect();
    Ok((y, means))
}

/// Top principal components of the preprocessed matrix.
///
/// The eigenproblem is posed on the smaller of the gene-gene covariance and
/// the cell-cell Gram matrix, applied implicitly so the centered matrix is
/// never densified. When fewer than `n_pcs` components carry variance the
/// result is truncated to the numerical rank and a warning is logged.
pub fn preprocess(expr: &ExpressionMatrix, n_pcs: usize) -> Result<Pca, TrajectoryError> {
    let cells = expr.n_cells();
    let genes = expr.n_genes();
    if n_pcs < 2 || cells <= n_pcs {
        return Err(TrajectoryError::InvalidParameter(format!(
            "need cells ({cells}) > n_pcs ({n_pcs}) >= 2"
        )));
    }
    let (y, mu) = normalized_log(expr)?;
    let yt = y.transpose();
    let denom = (cells - 1) as f64;

    // Xc v  (cells)  = Y^T v - (mu . v) 1
    let xc_apply = |v: &[f64], out: &mut [f64]| {
        yt.matvec(v, out);
        let shift: f64 = mu.iter().zip(v).map(|(a, b)| a * b).sum();
        out.iter_mut().for_each(|o| *o -= shift);
    };
    // Xc^T u (genes) = Y u - mu (1 . u)
    let xct_apply = |u: &[f64], out: &mut [f64]| {
        y.matvec(u, out);
        let s: f64 = u.iter().sum();
        out.iter_mut().zip(&mu).for_each(|(o, m)| *o -= m * s);
    };

    let k = n_pcs.min(genes).min(cells);
    let covariance_side = genes <= cells;
    let eig = if covariance_side {
        let mut tmp = vec![0.0; cells];
        top_eigenpairs(
            genes,
            k,
            |v, out| {
                xc_apply(v, &mut tmp);
                xct_apply(&tmp, out);
                out.iter_mut().for_each(|o| *o /= denom);
            },
            0x5eed,
        )?
    } else {
        let mut tmp = vec![0.0; genes];
        top_eigenpairs(
            cells,
            k,
            |u, out| {
                xct_apply(u, &mut tmp);
                xc_apply(&tmp, out);
                out.iter_mut().for_each(|o| *o /= denom);
            },
            0x5eed,
        )?
    };

    let lead = eig.values.first().copied().unwrap_or(0.0);
    if lead <= 0.0 {
        return Err(TrajectoryError::DegenerateInput(
            "expression has no variance after normalization".into(),
        ));
    }
    let rank = eig.values.iter().take_while(|&&v| v > 1e-10 * lead).count();
    if rank < n_pcs {
        log::warn!("expression has rank {rank} < n_pcs {n_pcs}; using {rank} components");
    }

    let mut scores = Array2::<f64>::zeros((cells, rank));
    let mut loadings = Array2::<f64>::zeros((genes, rank));
    let mut buf_c = vec![0.0; cells];
    let mut buf_g = vec![0.0; genes];
    for r in 0..rank {
        let v: Vec<f64> = eig.vectors.column(r).to_vec();
        if covariance_side {
            xc_apply(&v, &mut buf_c);
            scores.column_mut(r).assign(&Array1::from(buf_c.clone()));
            loadings.column_mut(r).assign(&Array1::from(v));
        } else {
            let scale = (denom * eig.values[r]).sqrt();
            scores
                .column_mut(r)
                .assign(&Array1::from(v.iter().map(|x| x * scale).collect::<Vec<_>>()));
            xct_apply(&v, &mut buf_g);
            let nrm = buf_g.iter().map(|x| x * x).sum::<f64>().sqrt();
            loadings
                .column_mut(r)
                .assign(&Array1::from(buf_g.iter().map(|x| x / nrm).collect::<Vec<_>>()));
        }
    }
    Ok(Pca {
        scores,
        loadings,
        variances: eig.values[..rank].to_vec(),
        requested: n_pcs,
    })
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gaussian kNN affinity with adaptive bandwidths.
///
/// `w_ij = exp(-d_ij^2 / (sigma_i sigma_j))` where `sigma_i` is the distance
/// to the `ceil(k/2)`-th nearest neighbour of cell `i`. A pair is kept if
/// either cell lists the other among its `k` nearest neighbours. The result is
/// symmetric with a zero diagonal.
pub fn knn_affinity(embed: &Array2<f64>, k: usize) -> Result<CsrMatrix<f64>, TrajectoryError> {
    let n = embed.nrows();
    if k == 0 {
        return Err(TrajectoryError::InvalidParameter("k must be >= 1".into()));
    }
    if k >= n {
        return Err(TrajectoryError::KTooLarge { k, cells: n });
    }
    let neighbours: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = embed.row(i);
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(row, embed.row(j)).sqrt(), j))
                .collect();
            d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d
        })
        .collect();
    let band = k.div_ceil(2);
    let sigma: Vec<f64> = neighbours
        .iter()
        .map(|nb| {
            let s = nb[band - 1].0;
            if s > 0.0 {
                s
            } else {
                // duplicates: fall back to the nearest non-zero neighbour distance
                nb.iter().map(|p| p.0).find(|&d| d > 0.0).unwrap_or(1.0)
            }
        })
        .collect();
    let mut trip = Vec::with_capacity(2 * n * k);
    for (i, nb) in neighbours.iter().enumerate() {
        for &(d, j) in nb {
            let w = if d == 0.0 {
                1.0
            } else {
                (-(d * d) / (sigma[i] * sigma[j])).exp()
            };
            trip.push((i, j, w));
            trip.push((j, i, w));
        }
    }
    Ok(CsrMatrix::from_triplets_with(n, n, trip, f64::max))
}

/// Connected components by breadth-first search; returns a label per node.
pub fn connected_components(adj: &CsrMatrix<f64>) -> Vec<usize> {
    let n = adj.nrows();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            let (cols, vals) = adj.row(u);
            for (&v, &w) in cols.iter().zip(vals) {
                if w > 0.0 && label[v] == usize::MAX {
                    label[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    label
}

/// Diffusion components on one connected component of the affinity graph.
#[derive(Clone, Debug)]
pub struct DiffusionMap {
    /// Original indices of the cells covered, ascending.
    pub cells: Vec<usize>,
    /// Eigenvalues of the transition operator, descending; the first is 1.
    pub eigenvalues: Vec<f64>,
    /// Right eigenvectors of the row-stochastic operator, one column each.
    pub psi: Array2<f64>,
}

impl DiffusionMap {
    /// Builds the anisotropic (alpha = 1) diffusion operator on `cells` and
    /// extracts its top `m + 1` eigenpairs.
    pub fn new(
        affinity: &CsrMatrix<f64>,
        cells: Vec<usize>,
        m: usize,
        seed: u64,
    ) -> Result<Self, TrajectoryError> {
        let n = cells.len();
        let mut local = vec![usize::MAX; affinity.nrows()];
        for (p, &c) in cells.iter().enumerate() {
            local[c] = p;
        }
        let mut trip = Vec::new();
        for (p, &c) in cells.iter().enumerate() {
            let (cols, vals) = affinity.row(c);
            for (&j, &w) in cols.iter().zip(vals) {
                if local[j] != usize::MAX && j != c {
                    trip.push((p, local[j], w));
                }
            }
        }
        let kernel = CsrMatrix::from_triplets(n, n, trip);
        let q = kernel.row_sums();
        if q.iter().any(|&v| v <= 0.0) {
            return Err(TrajectoryError::DegenerateInput(
                "cell without neighbours inside its component".into(),
            ));
        }
        let density = kernel.map_values(|i, j, w| w / (q[i] * q[j]));
        let d = density.row_sums();
        let inv_sqrt: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
        let sym = density.map_values(|i, j, w| w * inv_sqrt[i] * inv_sqrt[j]);

        let want = (m + 1).min(n);
        let eig = top_eigenpairs(n, want, |x, y| sym.matvec(x, y), seed)?;
        if (eig.values[0] - 1.0).abs() > 1e-8 {
            return Err(TrajectoryError::EigSolverFailure(format!(
                "leading eigenvalue {} differs from 1",
                eig.values[0]
            )));
        }
        let mut psi = eig.vectors.clone();
        for (i, mut row) in psi.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|v| v * inv_sqrt[i]);
        }
        Ok(Self {
            cells,
            eigenvalues: eig.values,
            psi,
        })
    }

    pub fn n_diffusion_components(&self) -> usize {
        self.eigenvalues.len().saturating_sub(1)
    }

    fn weights(&self) -> Result<Vec<f64>, TrajectoryError> {
        self.eigenvalues[1..]
            .iter()
            .map(|&l| {
                if 1.0 - l < 1e-12 {
                    Err(TrajectoryError::EigSolverFailure(
                        "non-leading eigenvalue at 1; operator is disconnected".into(),
                    ))
                } else {
                    Ok(l / (1.0 - l))
                }
            })
            .collect()
    }

    /// Diffusion pseudotime distance between two cells given by their
    /// positions in `self.cells`.
    pub fn dpt(&self, x: usize, y: usize) -> Result<f64, TrajectoryError> {
        let w = self.weights()?;
        Ok(self.dpt_with(&w, x, y))
    }

    fn dpt_with(&self, weights: &[f64], x: usize, y: usize) -> f64 {
        weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let diff = self.psi[[x, i + 1]] - self.psi[[y, i + 1]];
                w * w * diff * diff
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PseudotimeAssignment {
    pub values: Vec<f64>,
    pub root_cell: usize,
    pub root_auto_selected: bool,
    /// Cells outside the root's connected component; their pseudotime is 1.
    pub outside_component: usize,
    pub n_components_used: usize,
}

/// Diffusion pseudotime from `root`, min-max normalized to `[0, 1]`.
///
/// Without a root, the cell with the largest value of the first
/// non-trivial diffusion component on the largest connected component is
/// used.
pub fn diffusion_pseudotime(
    affinity: &CsrMatrix<f64>,
    root: Option<usize>,
    m: usize,
    seed: u64,
) -> Result<PseudotimeAssignment, TrajectoryError> {
    let n = affinity.nrows();
    if !(2..=15).contains(&m) {
        return Err(TrajectoryError::InvalidParameter(format!(
            "diffusion components m = {m} outside 2..=15"
        )));
    }
    if let Some(r) = root {
        if r >= n {
            return Err(TrajectoryError::InvalidParameter(format!(
                "root cell {r} out of range"
            )));
        }
    }
    let labels = connected_components(affinity);
    let target = match root {
        Some(r) => labels[r],
        None => {
            let mut sizes = vec![0usize; labels.iter().max().map_or(0, |m| m + 1)];
            for &l in &labels {
                sizes[l] += 1;
            }
            (0..sizes.len()).max_by_key(|&l| (sizes[l], usize::MAX - l)).unwrap_or(0)
        }
    };
    let cells: Vec<usize> = (0..n).filter(|&i| labels[i] == target).collect();
    if cells.len() < 2 {
        return Err(TrajectoryError::DisconnectedRoot(root.unwrap_or(cells[0])));
    }
    let outside = n - cells.len();
    if outside > 0 {
        log::warn!("{outside} cells lie outside the root component; pseudotime set to 1");
    }
    let m_eff = m.min(cells.len() - 1);
    if m_eff < m {
        log::warn!("component has {} cells; using {m_eff} diffusion components", cells.len());
    }
    let dm = DiffusionMap::new(affinity, cells, m_eff, seed)?;
    let root_local = match root {
        Some(r) => dm.cells.binary_search(&r).expect("root in its component"),
        None => {
            let col = dm.psi.column(1);
            let mut best = 0;
            for i in 1..col.len() {
                if col[i] > col[best] {
                    best = i;
                }
            }
            best
        }
    };
    let root_cell = dm.cells[root_local];
    if root.is_none() {
        log::info!("auto-selected root cell {root_cell}");
    }
    let w = dm.weights()?;
    let raw: Vec<f64> = (0..dm.cells.len())
        .map(|p| dm.dpt_with(&w, root_local, p))
        .collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    let mut values = vec![1.0; n];
    for (p, &c) in dm.cells.iter().enumerate() {
        values[c] = if max > 0.0 { raw[p] / max } else { 0.0 };
    }
    values[root_cell] = 0.0;
    Ok(PseudotimeAssignment {
        values,
        root_cell,
        root_auto_selected: root.is_none(),
        outside_component: outside,
        n_components_used: m_eff,
    })
}

/// Full trajectory: PCA, kNN kernel, diffusion pseudotime.
pub fn infer_pseudotime(
    expr: &ExpressionMatrix,
    params: &TrajectoryParams,
) -> Result<PseudotimeAssignment, TrajectoryError> {
    let n_pcs = params.n_pcs.min(expr.n_cells().saturating_sub(1));
    let pca = preprocess(expr, n_pcs)?;
    let aff = knn_affinity(&pca.scores, params.k)?;
    diffusion_pseudotime(&aff, params.root, params.n_components, params.seed)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinAssignment {
    /// 1-based bin of every cell.
    pub bin_of_cell: Vec<usize>,
    /// `T - 1` pseudotime cut points (midpoints between adjacent bins).
    pub boundaries: Vec<f64>,
    pub counts: Vec<usize>,
}

impl BinAssignment {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// Cell indices of 1-based bin `b`, ascending.
    pub fn cells_in(&self, b: usize) -> Vec<usize> {
        (0..self.bin_of_cell.len())
            .filter(|&c| self.bin_of_cell[c] == b)
            .collect()
    }
}

/// Equal-frequency bins over pseudotime with `T = min(target_bins,
/// floor(C / min_cells))`. Cells are ordered by `(pseudotime, index)`; the
/// first `C mod T` bins take one extra cell.
pub fn bin_cells(
    pseudotime: &[f64],
    min_cells: usize,
    target_bins: usize,
) -> Result<BinAssignment, TrajectoryError> {
    if min_cells == 0 || target_bins < 2 {
        return Err(TrajectoryError::InvalidParameter(
            "need min_cells >= 1 and target_bins >= 2".into(),
        ));
    }
    let c = pseudotime.len();
    if c < 2 * min_cells {
        return Err(TrajectoryError::TooFewCells { cells: c, min_cells });
    }
    if pseudotime.iter().any(|v| !v.is_finite()) {
        return Err(TrajectoryError::DegenerateInput("non-finite pseudotime".into()));
    }
    let first = pseudotime[0];
    if pseudotime.iter().all(|&v| v == first) {
        return Err(TrajectoryError::DegenerateInput(
            "all cells share one pseudotime value; bins would be arbitrary".into(),
        ));
    }
    let t = target_bins.min(c / min_cells);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| pseudotime[a].total_cmp(&pseudotime[b]).then(a.cmp(&b)));
    let base = c / t;
    let extra = c % t;
    let counts: Vec<usize> = (0..t).map(|b| base + usize::from(b < extra)).collect();
    let mut bin_of_cell = vec![0usize; c];
    let mut boundaries = Vec::with_capacity(t - 1);
    let mut pos = 0;
    for (b, &cnt) in counts.iter().enumerate() {
        for &cell in &order[pos..pos + cnt] {
            bin_of_cell[cell] = b + 1;
        }
        pos += cnt;
        if b + 1 < t {
            let lo = pseudotime[order[pos - 1]];
            let hi = pseudotime[order[pos]];
            boundaries.push(0.5 * (lo + hi));
        }
    }
    Ok(BinAssignment {
        bin_of_cell,
        boundaries,
        counts,
    })
}
