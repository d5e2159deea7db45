//! Symmetric eigen-solver for the largest eigenpairs of an implicit operator.
//!
//! Lanczos with full reorthogonalization. The Krylov basis grows until the
//! requested Ritz pairs satisfy the residual bound or the basis spans the
//! whole space, in which case the result is exact up to rounding. Invariant
//! subspaces (rank-deficient or disconnected operators) are handled by
//! restarting with a fresh vector orthogonal to the current basis.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::Rng;
use thiserror::Error;

use crate::seed::rng_from;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("eigen-solver produced non-finite values")]
    NonFinite,
    #[error("requested {k} eigenpairs from an operator of size {n}")]
    TooManyPairs { k: usize, n: usize },
}

/// Eigenpairs in descending eigenvalue order. `vectors` is `n × k`, one
/// unit-norm column per eigenvalue, sign-fixed so that the entry of largest
/// magnitude is positive.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

const RESIDUAL_TOL: f64 = 1e-11;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= c * qi;
            }
        }
    }
}

fn fresh_direction(n: usize, basis: &[Vec<f64>], rng: &mut impl Rng) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        orthogonalize(&mut v, basis);
        let nrm = dot(&v, &v).sqrt();
        if nrm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nrm);
            return Some(v);
        }
    }
    None
}

/// Largest-`k` eigenpairs of the symmetric operator `apply` on `R^n`.
pub fn top_eigenpairs(
    n: usize,
    k: usize,
    mut apply: impl FnMut(&[f64], &mut [f64]),
    seed: u64,
) -> Result<EigenPairs, LinalgError> {
    if k == 0 || k > n {
        return Err(LinalgError::TooManyPairs { k, n });
    }
    let mut rng = rng_from(seed);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut q = fresh_direction(n, &basis, &mut rng).expect("n >= 1");
    let mut fresh = true;
    let mut w = vec![0.0; n];
    let mut norm_est: f64 = 0.0;

    loop {
        apply(&q, &mut w);
        if w.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let aq = dot(&w, &w).sqrt();
        let a = dot(&q, &w);
        alpha.push(a);
        basis.push(q.clone());
        if fresh && basis.len() > 1 && aq <= 1e-10 * norm_est {
            // a generic vector of the complement is annihilated, so the
            // operator vanishes on the rest of the space
            return finish_with_null_complement(basis, &alpha, &beta, k, &mut rng);
        }
        orthogonalize(&mut w, &basis);
        let b = dot(&w, &w).sqrt();
        norm_est = norm_est.max(a.abs() + b).max(aq);
        let dim = basis.len();

        let full = dim == n;
        let invariant = b <= 1e-12 * norm_est.max(f64::MIN_POSITIVE);
        if full || (!invariant && dim >= k && (dim - k).is_multiple_of(4)) {
            let (eig, order) = ritz(&alpha, &beta);
            let tol = RESIDUAL_TOL * norm_est.max(1e-300);
            let converged = order[..k].iter().all(|&i| {
                let last = eig.eigenvectors[(dim - 1, i)];
                (b * last).abs() <= tol
            });
            if full || converged {
                return assemble(&basis, &eig, order[..k].iter().map(|&i| Column::Ritz(i)).collect());
            }
        }

        if invariant {
            match fresh_direction(n, &basis, &mut rng) {
                Some(v) => {
                    beta.push(0.0);
                    q = v;
                    fresh = true;
                }
                None => {
                    return finish_with_null_complement(basis, &alpha, &beta, k, &mut rng);
                }
            }
        } else {
            beta.push(b);
            q = w.iter().map(|x| x / b).collect();
            fresh = false;
        }
    }
}

fn ritz(alpha: &[f64], beta: &[f64]) -> (SymmetricEigen<f64, nalgebra::Dyn>, Vec<usize>) {
    let eig = SymmetricEigen::new(tridiagonal(alpha, beta));
    let mut order: Vec<usize> = (0..alpha.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });
    (eig, order)
}

fn finish_with_null_complement(
    basis: Vec<Vec<f64>>,
    alpha: &[f64],
    beta: &[f64],
    k: usize,
    rng: &mut impl Rng,
) -> Result<EigenPairs, LinalgError> {
    let n = basis[0].len();
    let (eig, order) = ritz(alpha, beta);
    // the unexplored complement contributes eigenvalue 0, which ranks above
    // any negative Ritz value
    let mut items: Vec<Column> = order
        .iter()
        .copied()
        .filter(|&i| eig.eigenvalues[i] >= 0.0)
        .take(k)
        .map(Column::Ritz)
        .collect();
    let mut all = basis.clone();
    while items.len() < k {
        match fresh_direction(n, &all, rng) {
            Some(v) => {
                all.push(v.clone());
                items.push(Column::Null(v));
            }
            None => break,
        }
    }
    let missing = k - items.len();
    items.extend(
        order
            .iter()
            .copied()
            .filter(|&i| eig.eigenvalues[i] < 0.0)
            .take(missing)
            .map(Column::Ritz),
    );
    assemble(&basis, &eig, items)
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    t
}

enum Column {
    Ritz(usize),
    Null(Vec<f64>),
}

fn assemble(
    basis: &[Vec<f64>],
    eig: &SymmetricEigen<f64, nalgebra::Dyn>,
    items: Vec<Column>,
) -> Result<EigenPairs, LinalgError> {
    let n = basis[0].len();
    let mut vectors = Array2::<f64>::zeros((n, items.len()));
    let mut values = Vec::with_capacity(items.len());
    for (col, item) in items.into_iter().enumerate() {
        match item {
            Column::Ritz(i) => {
                values.push(eig.eigenvalues[i]);
                for (j, q) in basis.iter().enumerate() {
                    let s = eig.eigenvectors[(j, i)];
                    for r in 0..n {
                        vectors[[r, col]] += s * q[r];
                    }
                }
            }
            Column::Null(v) => {
                values.push(0.0);
                for r in 0..n {
                    vectors[[r, col]] = v[r];
                }
            }
        }
        let mut c = vectors.column_mut(col);
        let nrm = c.dot(&c).sqrt();
        if nrm > 0.0 {
            c.mapv_inplace(|x| x / nrm);
        }
        let mut pivot = 0;
        for r in 0..n {
            if c[r].abs() > c[pivot].abs() {
                pivot = r;
            }
        }
        if c[pivot] < 0.0 {
            c.mapv_inplace(|x| -x);
        }
    }
    if values.iter().any(|v| !v.is_finite()) || vectors.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(EigenPairs { values, vectors })
}
