//! Adjacency realizations of a snapshot for the convolution layers.

use std::rc::Rc;

use super::NnError;
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;
use crate::tgraph::Snapshot;

/// Weighted adjacency in CSR form. Row `i`, column `j` holds the weight of
/// edge `i -> j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseAdj<T> {
    matrix: CsrMatrix<T>,
    symmetric: bool,
}

impl<T: Scalar> SparseAdj<T> {
    /// Builds from weighted edges. With `symmetrize`, each pair keeps the
    /// larger of its two directed weights in both directions.
    pub fn from_edges(n: usize, edges: &[(usize, usize, T)], symmetrize: bool) -> Result<Self, NnError> {
        let mut trip = Vec::with_capacity(edges.len() * if symmetrize { 2 } else { 1 });
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(NnError::ShapeMismatch(format!(
                    "edge {i} -> {j} outside {n} nodes"
                )));
            }
            if !(w >= T::zero()) || !w.is_finite() {
                return Err(NnError::Numerical(format!("edge weight {w} on {i} -> {j}")));
            }
            trip.push((i, j, w));
            if symmetrize {
                trip.push((j, i, w));
            }
        }
        let matrix = CsrMatrix::from_triplets_with(n, n, trip, T::max);
        let symmetric = symmetrize || matrix.is_symmetric();
        Ok(Self { matrix, symmetric })
    }

    /// Snapshot edges with confidences min-max normalized to `[0, 1]`
    /// (all weights 1 when every confidence is equal).
    pub fn from_snapshot(s: &Snapshot, symmetrize: bool) -> Self {
        let conf: Vec<f64> = s.edges().iter().map(|e| e.confidence).collect();
        let lo = conf.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = conf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let edges: Vec<(usize, usize, T)> = s
            .edges()
            .iter()
            .map(|e| {
                let w = if hi > lo { (e.confidence - lo) / (hi - lo) } else { 1.0 };
                (e.src, e.dst, T::of(w))
            })
            .collect();
        Self::from_edges(s.n_nodes(), &edges, symmetrize).expect("snapshot edges are validated")
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// `D^{-1/2} (A + I) D^{-1/2}` with `D` the row sums of `A + I`.
    pub fn gcn_operator(&self) -> CsrMatrix<T> {
        let n = self.n();
        let mut trip: Vec<(usize, usize, T)> = self.matrix.iter().collect();
        trip.extend((0..n).map(|i| (i, i, T::one())));
        let a = CsrMatrix::from_triplets(n, n, trip);
        let inv: Vec<T> = a.row_sums().into_iter().map(|d| T::one() / d.sqrt()).collect();
        a.map_values(|i, j, v| v * inv[i] * inv[j])
    }

    /// Rescaled Laplacian `2L/lambda_max - I` with `lambda_max = 2`, i.e.
    /// `-D^{-1/2} A D^{-1/2}`. Isolated nodes get empty rows.
    pub fn cheb_operator(&self) -> Result<CsrMatrix<T>, NnError> {
        if !self.symmetric {
            return Err(NnError::AsymmetricAdjacency);
        }
        let inv: Vec<T> = self
            .matrix
            .row_sums()
            .into_iter()
            .map(|d| if d > T::zero() { T::one() / d.sqrt() } else { T::zero() })
            .collect();
        Ok(self.matrix.map_values(|i, j, v| -(v * inv[i] * inv[j])))
    }

    /// In-neighbourhoods for attention: for each target `i`, the sources `j`
    /// with an edge `j -> i` plus `i` itself.
    pub fn in_neighbourhoods(&self) -> Neighbourhoods {
        let n = self.n();
        let mut sources: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (j, i, _) in self.matrix.iter() {
            if i != j {
                sources[i].push(j);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut src = Vec::new();
        let mut dst = Vec::new();
        offsets.push(0);
        for (i, mut s) in sources.into_iter().enumerate() {
            s.push(i);
            s.sort_unstable();
            for j in s {
                src.push(j);
                dst.push(i);
            }
            offsets.push(src.len());
        }
        Neighbourhoods {
            offsets: Rc::new(offsets),
            src: Rc::new(src),
            dst: Rc::new(dst),
        }
    }
}

/// Edge lists grouped by target node, as consumed by segment operations.
#[derive(Clone, Debug)]
pub struct Neighbourhoods {
    pub offsets: Rc<Vec<usize>>,
    pub src: Rc<Vec<usize>>,
    pub dst: Rc<Vec<usize>>,
}

/// Precomputed operators for one snapshot.
#[derive(Clone, Debug)]
pub struct GraphInput<T> {
    pub n: usize,
    pub gcn: Rc<CsrMatrix<T>>,
    pub lhat: Rc<CsrMatrix<T>>,
    pub neighbourhoods: Neighbourhoods,
}

impl<T: Scalar> GraphInput<T> {
    /// Spectral operators use the symmetrized adjacency; attention keeps
    /// edge direction.
    pub fn new(symmetric: &SparseAdj<T>, directed: &SparseAdj<T>) -> Result<Self, NnError> {
        if symmetric.n() != directed.n() {
            return Err(NnError::ShapeMismatch("adjacency sizes differ".into()));
        }
        Ok(Self {
            n: symmetric.n(),
            gcn: Rc::new(symmetric.gcn_operator()),
            lhat: Rc::new(symmetric.cheb_operator()?),
            neighbourhoods: directed.in_neighbourhoods(),
        })
    }

    pub fn from_snapshot(s: &Snapshot) -> Self {
        let sym = SparseAdj::from_snapshot(s, true);
        let dir = SparseAdj::from_snapshot(s, false);
        Self::new(&sym, &dir).expect("symmetrized adjacency")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tgraph::Edge;
    use ndarray::Array2;

    #[test]
    fn symmetrization_takes_max() {
        let a = SparseAdj::<f64>::from_edges(3, &[(0, 1, 0.2), (1, 0, 0.7), (1, 2, 0.4)], true).unwrap();
        assert_eq!(a.matrix().get(0, 1), 0.7);
        assert_eq!(a.matrix().get(1, 0), 0.7);
        assert_eq!(a.matrix().get(2, 1), 0.4);
        assert!(a.is_symmetric());
    }

    #[test]
    fn directed_cheb_rejected() {
        let a = SparseAdj::<f64>::from_edges(2, &[(0, 1, 1.0)], false).unwrap();
        assert!(matches!(a.cheb_operator(), Err(NnError::AsymmetricAdjacency)));
    }

    #[test]
    fn confidence_normalization() {
        let s = Snapshot::new(
            1,
            vec![Edge::new(0, 1, 2.0), Edge::new(1, 2, 4.0), Edge::new(2, 0, 3.0)],
            Array2::zeros((3, 5)),
            3,
        )
        .unwrap();
        let a = SparseAdj::<f64>::from_snapshot(&s, false);
        assert_eq!(a.matrix().get(0, 1), 0.0);
        assert_eq!(a.matrix().get(1, 2), 1.0);
        assert_eq!(a.matrix().get(2, 0), 0.5);
    }

    #[test]
    fn neighbourhoods_include_self() {
        let a = SparseAdj::<f64>::from_edges(3, &[(0, 2, 1.0), (1, 2, 1.0)], false).unwrap();
        let nb = a.in_neighbourhoods();
        assert_eq!(*nb.offsets, vec![0, 1, 2, 5]);
        assert_eq!(*nb.src, vec![0, 1, 0, 1, 2]);
    }
}
