//! Compressed sparse row storage.

use ndarray::Array2;

use crate::scalar::Scalar;

/// Row-compressed sparse matrix. Column indices within a row are sorted and
/// unique; explicit zeros may be present only if the caller inserts them.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets. Entries sharing a position
    /// are merged with `combine`. Panics if an index is out of bounds; callers
    /// validate ids before reaching this point.
    pub fn from_triplets_with(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, T)>,
        combine: impl Fn(T, T) -> T,
    ) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            if last == Some((r, c)) {
                let slot = data.last_mut().expect("previous entry exists");
                *slot = combine(*slot, v);
                continue;
            }
            indptr[r + 1] += 1;
            indices.push(c);
            data.push(v);
            last = Some((r, c));
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    /// Triplet constructor that sums duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: Vec<(usize, usize, T)>) -> Self {
        Self::from_triplets_with(nrows, ncols, triplets, |a, b| a + b)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, T::one())).collect())
    }

    pub fn from_dense(dense: &Array2<T>) -> Self {
        let mut trip = Vec::new();
        for ((r, c), &v) in dense.indexed_iter() {
            if v != T::zero() {
                trip.push((r, c, v));
            }
        }
        Self::from_triplets(dense.nrows(), dense.ncols(), trip)
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => T::zero(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn map_values(&self, f: impl Fn(usize, usize, T) -> T) -> Self {
        let mut out = self.clone();
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                out.data[p] = f(r, self.indices[p], self.data[p]);
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.nrows)
            .map(|r| self.row(r).1.iter().copied().sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let trip = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, trip)
    }

    /// `y = self · x`.
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            let mut acc = T::zero();
            for (&c, &v) in cols.iter().zip(vals) {
                acc = acc + v * x[c];
            }
            *out = acc;
        }
    }

    /// Sparse-dense product `self · dense`.
    pub fn spmm(&self, dense: &Array2<T>) -> Array2<T> {
        assert_eq!(dense.nrows(), self.ncols, "spmm inner dimension");
        let d = dense.ncols();
        let mut out = Array2::<T>::zeros((self.nrows, d));
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut orow = out.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                orow.scaled_add(v, &dense.row(c));
            }
        }
        out
    }

    /// Transposed product `self^T · dense` without materializing the
    /// transpose.
    pub fn spmm_transpose(&self, dense: &Array2<T>) -> Array2<T> {
        assert_eq!(dense.nrows(), self.nrows, "spmm_transpose inner dimension");
        let mut out = Array2::<T>::zeros((self.ncols, dense.ncols()));
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let drow = dense.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.row_mut(c).scaled_add(v, &drow);
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::<T>::zeros((self.nrows, self.ncols));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }

    /// Exact structural and numeric symmetry.
    pub fn is_symmetric(&self) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        self.iter().all(|(r, c, v)| self.get(c, r) == v)
    }
}
