//! Fitting a two-term Chebyshev convolution to a planted linear map of the
//! scaled Laplacian.

use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tgrn_core::nn::{Adam, AdamConfig, ChebConv, GraphInput, ParamStore, SparseAdj, Tape};

pub struct FitOutcome {
    pub mse: f64,
    pub steps: usize,
    pub elapsed: Duration,
}

/// Dense `L_hat = -D^{-1/2} A D^{-1/2}` of the symmetrized graph, with zero
/// rows for isolated nodes.
pub fn dense_lhat(n: usize, edges: &[(usize, usize, f64)]) -> Array2<f64> {
    let mut a = Array2::<f64>::zeros((n, n));
    for &(i, j, w) in edges {
        let v = a[[i, j]].max(w);
        a[[i, j]] = v;
        a[[j, i]] = v;
    }
    let deg = a.sum_axis(ndarray::Axis(1));
    Array2::from_shape_fn((n, n), |(i, j)| {
        if deg[i] > 0.0 && deg[j] > 0.0 {
            -a[[i, j]] / (deg[i] * deg[j]).sqrt()
        } else {
            0.0
        }
    })
}

/// Trains `ChebConv` with `K = 2` on `Y = L_hat X W*` until the MSE drops
/// below `target` or `max_steps` Adam steps are spent.
pub fn fit_cheb_to_laplacian_map(seed: u64, max_steps: usize, target: f64) -> FitOutcome {
    let (n, d_in, d_out) = (50, 6, 4);
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        edges.push((i, (i + 1) % n, r.gen_range(0.2..1.0)));
    }
    while edges.len() < 3 * n {
        let (a, b) = (r.gen_range(0..n), r.gen_range(0..n));
        if a != b && !edges.iter().any(|e| (e.0, e.1) == (a, b)) {
            edges.push((a, b, r.gen_range(0.2..1.0)));
        }
    }
    let g = GraphInput::new(
        &SparseAdj::from_edges(n, &edges, true).unwrap(),
        &SparseAdj::from_edges(n, &edges, false).unwrap(),
    )
    .unwrap();
    let x = Array2::from_shape_fn((n, d_in), |_| r.gen_range(-1.0..1.0));
    let w_star = Array2::from_shape_fn((d_in, d_out), |_| r.gen_range(-1.0..1.0));
    let y = dense_lhat(n, &edges).dot(&x).dot(&w_star);

    let mut store = ParamStore::new();
    let conv = ChebConv::new(&mut store, "cheb", d_in, d_out, 2, true, seed).unwrap();
    let mut opt = Adam::new(AdamConfig {
        lr: 0.01,
        ..AdamConfig::default()
    });
    let start = Instant::now();
    let mut mse = f64::INFINITY;
    let mut steps = 0;
    while steps < max_steps {
        let tape = Tape::new();
        let p = store.bind(&tape).unwrap();
        let xv = tape.constant(x.clone()).unwrap();
        let out = conv.forward(&tape, &p, &g, xv).unwrap();
        let yv = tape.constant(y.clone()).unwrap();
        let loss = tape.mse(out, yv).unwrap();
        mse = tape.scalar(loss);
        if mse < target {
            break;
        }
        let grads = tape.backward(loss).unwrap();
        opt.step(&mut store, &p, &grads).unwrap();
        steps += 1;
    }
    FitOutcome {
        mse,
        steps,
        elapsed: start.elapsed(),
    }
}
