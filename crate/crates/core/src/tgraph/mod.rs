//! Discrete-time temporal graphs over a persistent gene vocabulary.
//!
//! A [`TemporalGraph`] is an ordered run of [`Snapshot`]s that all share one
//! [`GeneVocab`]. Genes without edges in a snapshot stay in the graph as
//! isolated nodes and keep their node features.

mod bundle;

use std::collections::{HashMap, HashSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bundle::{load_bundle, save_bundle, Manifest, BUNDLE_FORMAT_VERSION};

/// Names of the five per-gene expression statistics, in column order.
pub const BASE_FEATURES: [&str; 5] = ["mean", "median", "std", "frac_nonzero", "total"];

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("no snapshots supplied")]
    EmptyInput,
    #[error("gene id {id} out of range for vocabulary of {n}")]
    IdOutOfRange { id: usize, n: usize },
    #[error("duplicate edge ({src}, {dst}) in snapshot {t}")]
    DuplicateEdge { src: usize, dst: usize, t: usize },
    #[error("self-loop on gene {node} in snapshot {t}")]
    SelfLoop { node: usize, t: usize },
    #[error("need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },
    #[error("vocabulary must hold at least 2 genes, got {0}")]
    VocabTooSmall(usize),
    #[error("duplicate gene symbol {0:?}")]
    DuplicateSymbol(String),
    #[error("snapshot indices must run 1..T, found {found} at position {position}")]
    NonConsecutive { position: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("edge ({src}, {dst}) in snapshot {t} has invalid confidence {value}")]
    InvalidConfidence {
        src: usize,
        dst: usize,
        t: usize,
        value: f64,
    },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bundle schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),
}

/// Ordered, unique gene symbols; the position of a symbol is its id.
#[derive(Clone, Debug)]
pub struct GeneVocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl PartialEq for GeneVocab {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols
    }
}

impl GeneVocab {
    pub fn new(symbols: Vec<String>) -> Result<Self, GraphError> {
        if symbols.len() < 2 {
            return Err(GraphError::VocabTooSmall(symbols.len()));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(GraphError::DuplicateSymbol(s.clone()));
            }
        }
        Ok(Self { symbols, index })
    }

    /// Vocabulary `g0, g1, ...` used by synthetic fixtures.
    pub fn numbered(n: usize) -> Result<Self, GraphError> {
        Self::new((0..n).map(|i| format!("g{i}")).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.symbols[id]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub confidence: f64,
}

impl Edge {
    pub fn new(src: usize, dst: usize, confidence: f64) -> Self {
        Self {
            src,
            dst,
            confidence,
        }
    }
}

/// One GRN snapshot. Edges are kept sorted by `(src, dst)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    t: usize,
    edges: Vec<Edge>,
    node_features: Array2<f64>,
    active_mask: Vec<bool>,
}

impl Snapshot {
    /// Validates edges against `n_genes` and derives the active mask.
    pub fn new(
        t: usize,
        mut edges: Vec<Edge>,
        node_features: Array2<f64>,
        n_genes: usize,
    ) -> Result<Self, GraphError> {
        if node_features.nrows() != n_genes {
            return Err(GraphError::DimensionMismatch(format!(
                "snapshot {t}: node feature rows {} != |V| {n_genes}",
                node_features.nrows()
            )));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut active_mask = vec![false; n_genes];
        for e in &edges {
            for id in [e.src, e.dst] {
                if id >= n_genes {
                    return Err(GraphError::IdOutOfRange { id, n: n_genes });
                }
            }
            if e.src == e.dst {
                return Err(GraphError::SelfLoop { node: e.src, t });
            }
            if !(e.confidence.is_finite() && e.confidence >= 0.0) {
                return Err(GraphError::InvalidConfidence {
                    src: e.src,
                    dst: e.dst,
                    t,
                    value: e.confidence,
                });
            }
            if !seen.insert((e.src, e.dst)) {
                return Err(GraphError::DuplicateEdge {
                    src: e.src,
                    dst: e.dst,
                    t,
                });
            }
            active_mask[e.src] = true;
            active_mask[e.dst] = true;
        }
        edges.sort_by_key(|e| (e.src, e.dst));
        Ok(Self {
            t,
            edges,
            node_features,
            active_mask,
        })
    }

    /// 1-based position in the temporal graph.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_features(&self) -> &Array2<f64> {
        &self.node_features
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.ncols()
    }

    pub fn n_nodes(&self) -> usize {
        self.active_mask.len()
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active_mask
    }

    pub fn active_nodes(&self) -> Vec<usize> {
        (0..self.active_mask.len())
            .filter(|&i| self.active_mask[i])
            .collect()
    }

    pub fn edge_set(&self) -> HashSet<(usize, usize)> {
        self.edges.iter().map(|e| (e.src, e.dst)).collect()
    }

    /// Mean-expression column (feature 0).
    pub fn mean_expression(&self) -> Vec<f64> {
        self.node_features.column(0).to_vec()
    }
}

/// Ordered snapshots `1..=T` sharing a vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalGraph {
    vocab: GeneVocab,
    snapshots: Vec<Snapshot>,
}

pub fn build_temporal_graph(
    vocab: GeneVocab,
    snapshots: Vec<Snapshot>,
) -> Result<TemporalGraph, GraphError> {
    if snapshots.is_empty() {
        return Err(GraphError::EmptyInput);
    }
    let n = vocab.len();
    let d_x = snapshots[0].feature_dim();
    for (pos, s) in snapshots.iter().enumerate() {
        if s.t != pos + 1 {
            return Err(GraphError::NonConsecutive {
                position: pos + 1,
                found: s.t,
            });
        }
        if s.n_nodes() != n {
            return Err(GraphError::DimensionMismatch(format!(
                "snapshot {} has {} nodes, vocabulary has {n}",
                s.t,
                s.n_nodes()
            )));
        }
        if s.feature_dim() != d_x {
            return Err(GraphError::DimensionMismatch(format!(
                "snapshot {} has d_x={}, snapshot 1 has d_x={d_x}",
                s.t,
                s.feature_dim()
            )));
        }
    }
    Ok(TemporalGraph { vocab, snapshots })
}

impl TemporalGraph {
    pub fn vocab(&self) -> &GeneVocab {
        &self.vocab
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    /// Snapshot at 1-based index `t`.
    pub fn snapshot(&self, t: usize) -> &Snapshot {
        &self.snapshots[t - 1]
    }

    /// Number of snapshots `T`.
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn n_genes(&self) -> usize {
        self.vocab.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.snapshots[0].feature_dim()
    }

    pub fn total_edges(&self) -> usize {
        self.snapshots.iter().map(|s| s.edges.len()).sum()
    }

    /// Copy with snapshots reordered by `order` (1-based source indices) and
    /// renumbered `1..=T`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self, GraphError> {
        let snaps = order
            .iter()
            .enumerate()
            .map(|(pos, &src)| {
                let s = &self.snapshots[src - 1];
                Snapshot {
                    t: pos + 1,
                    ..s.clone()
                }
            })
            .collect();
        build_temporal_graph(self.vocab.clone(), snaps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RecurrenceEntry {
    pub t: usize,
    pub recurrent_fraction: f64,
    pub new_fraction: f64,
}

/// Recurrent-vs-new edge proportions for `t = 2..=T`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecurrenceSeries {
    pub per_snapshot: Vec<RecurrenceEntry>,
    pub average: f64,
}

/// An edge of snapshot `t` is recurrent when it occurs in any snapshot
/// `s < t`. A snapshot with no edges counts as entirely new.
pub fn recurrence_stats(tg: &TemporalGraph) -> Result<RecurrenceSeries, GraphError> {
    if tg.len() < 2 {
        return Err(GraphError::TooFewSnapshots {
            needed: 2,
            got: tg.len(),
        });
    }
    let mut history: HashSet<(usize, usize)> = tg.snapshots[0].edge_set();
    let mut per_snapshot = Vec::with_capacity(tg.len() - 1);
    for s in &tg.snapshots[1..] {
        let total = s.edges.len();
        let recurrent = s
            .edges
            .iter()
            .filter(|e| history.contains(&(e.src, e.dst)))
            .count();
        let frac = if total == 0 {
            0.0
        } else {
            recurrent as f64 / total as f64
        };
        per_snapshot.push(RecurrenceEntry {
            t: s.t,
            recurrent_fraction: frac,
            new_fraction: 1.0 - frac,
        });
        history.extend(s.edges.iter().map(|e| (e.src, e.dst)));
    }
    let average =
        per_snapshot.iter().map(|e| e.recurrent_fraction).sum::<f64>() / per_snapshot.len() as f64;
    Ok(RecurrenceSeries {
        per_snapshot,
        average,
    })
}

/// `c_i = outdeg(i) / (|V| - 1)`.
pub fn out_degree_centrality(s: &Snapshot, vocab_size: usize) -> Result<Vec<f64>, GraphError> {
    if vocab_size < 2 {
        return Err(GraphError::VocabTooSmall(vocab_size));
    }
    let mut deg = vec![0usize; vocab_size];
    for e in &s.edges {
        if e.src >= vocab_size {
            return Err(GraphError::IdOutOfRange {
                id: e.src,
                n: vocab_size,
            });
        }
        deg[e.src] += 1;
    }
    let denom = (vocab_size - 1) as f64;
    Ok(deg.into_iter().map(|d| d as f64 / denom).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(n: usize) -> Array2<f64> {
        Array2::zeros((n, 5))
    }

    fn snap(t: usize, n: usize, edges: &[(usize, usize)]) -> Snapshot {
        let e = edges.iter().map(|&(a, b)| Edge::new(a, b, 1.0)).collect();
        Snapshot::new(t, e, feats(n), n).unwrap()
    }

    #[test]
    fn builds_with_active_masks() {
        let vocab = GeneVocab::numbered(3).unwrap();
        let tg = build_temporal_graph(
            vocab,
            vec![snap(1, 3, &[(0, 1)]), snap(2, 3, &[(0, 1), (1, 2)])],
        )
        .unwrap();
        assert_eq!(tg.len(), 2);
        assert_eq!(tg.snapshot(1).active_mask(), &[true, true, false]);
        assert_eq!(tg.snapshot(2).active_mask(), &[true, true, true]);
    }

    #[test]
    fn rejects_self_loop_and_duplicates() {
        let r = Snapshot::new(1, vec![Edge::new(1, 1, 1.0)], feats(3), 3);
        assert!(matches!(r, Err(GraphError::SelfLoop { node: 1, t: 1 })));
        let r = Snapshot::new(
            1,
            vec![Edge::new(0, 1, 1.0), Edge::new(0, 1, 0.5)],
            feats(3),
            3,
        );
        assert!(matches!(r, Err(GraphError::DuplicateEdge { .. })));
        let r = Snapshot::new(1, vec![Edge::new(0, 3, 1.0)], feats(3), 3);
        assert!(matches!(r, Err(GraphError::IdOutOfRange { id: 3, n: 3 })));
    }

    #[test]
    fn empty_and_nonconsecutive_rejected() {
        let vocab = GeneVocab::numbered(3).unwrap();
        assert!(matches!(
            build_temporal_graph(vocab.clone(), vec![]),
            Err(GraphError::EmptyInput)
        ));
        assert!(matches!(
            build_temporal_graph(vocab, vec![snap(2, 3, &[])]),
            Err(GraphError::NonConsecutive { .. })
        ));
    }

    #[test]
    fn vocab_invariants() {
        assert!(matches!(
            GeneVocab::new(vec!["a".into()]),
            Err(GraphError::VocabTooSmall(1))
        ));
        assert!(matches!(
            GeneVocab::new(vec!["a".into(), "a".into()]),
            Err(GraphError::DuplicateSymbol(_))
        ));
        let v = GeneVocab::new(vec!["Klf1".into(), "klf1".into()]).unwrap();
        assert_eq!(v.id("klf1"), Some(1));
    }

    #[test]
    fn recurrence_hand_count() {
        let vocab = GeneVocab::numbered(3).unwrap();
        let tg = build_temporal_graph(
            vocab,
            vec![snap(1, 3, &[(0, 1), (1, 2)]), snap(2, 3, &[(0, 1), (2, 0)])],
        )
        .unwrap();
        let r = recurrence_stats(&tg).unwrap();
        assert_eq!(r.per_snapshot.len(), 1);
        assert_eq!(r.per_snapshot[0].recurrent_fraction, 0.5);
        assert_eq!(r.per_snapshot[0].new_fraction, 0.5);
        assert_eq!(r.average, 0.5);
    }

    #[test]
    fn recurrence_identical_snapshots() {
        let vocab = GeneVocab::numbered(3).unwrap();
        let e = [(0, 1), (1, 2)];
        let tg =
            build_temporal_graph(vocab, vec![snap(1, 3, &e), snap(2, 3, &e), snap(3, 3, &e)])
                .unwrap();
        let r = recurrence_stats(&tg).unwrap();
        for p in &r.per_snapshot {
            assert_eq!((p.recurrent_fraction, p.new_fraction), (1.0, 0.0));
        }
        assert_eq!(r.average, 1.0);
    }

    #[test]
    fn recurrence_counts_any_earlier_snapshot() {
        let vocab = GeneVocab::numbered(3).unwrap();
        let tg = build_temporal_graph(
            vocab,
            vec![snap(1, 3, &[(0, 1)]), snap(2, 3, &[(1, 2)]), snap(3, 3, &[(0, 1)])],
        )
        .unwrap();
        let r = recurrence_stats(&tg).unwrap();
        assert_eq!(r.per_snapshot[0].recurrent_fraction, 0.0);
        assert_eq!(r.per_snapshot[1].recurrent_fraction, 1.0);
    }

    #[test]
    fn recurrence_needs_two_snapshots() {
        let vocab = GeneVocab::numbered(3).unwrap();
        let tg = build_temporal_graph(vocab, vec![snap(1, 3, &[(0, 1)])]).unwrap();
        assert!(matches!(
            recurrence_stats(&tg),
            Err(GraphError::TooFewSnapshots { .. })
        ));
    }

    #[test]
    fn centrality_formula() {
        let star = snap(1, 4, &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(out_degree_centrality(&star, 4).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        let empty = snap(1, 5, &[]);
        assert_eq!(out_degree_centrality(&empty, 5).unwrap(), vec![0.0; 5]);
        let two = snap(1, 5, &[(2, 0), (2, 4)]);
        assert_eq!(out_degree_centrality(&two, 5).unwrap()[2], 0.5);
        assert!(matches!(
            out_degree_centrality(&empty, 1),
            Err(GraphError::VocabTooSmall(1))
        ));
    }
}
