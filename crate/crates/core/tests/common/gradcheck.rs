//! Central finite-difference gradient checks for every tape op, layer and
//! model family.

use std::rc::Rc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tgrn_core::models::{DecoderKind, Family, HeadKind, Model, ModelConfig, ModelState};
use tgrn_core::nn::{
    Bound, ChebConv, GatConv, GcnConv, GraphGruCell, GraphInput, GruCell, Init, Linear, MatrixGru,
    NnError, ParamStore, SparseAdj, Tape, Var,
};

pub const STEP: f64 = 1e-5;

/// Largest relative error between analytic and numerical gradients over all
/// parameters in `store`. The denominator is floored at `1e-6`.
pub fn max_rel_error<F>(store: &ParamStore<f64>, loss: F) -> f64
where
    F: Fn(&Tape<f64>, &Bound) -> Result<Var, NnError>,
{
    let tape = Tape::new();
    let p = store.bind(&tape).unwrap();
    let l = loss(&tape, &p).unwrap();
    let grads = tape.backward(l).unwrap();
    let eval = |s: &ParamStore<f64>| {
        let t = Tape::new();
        let b = s.bind(&t).unwrap();
        let v = loss(&t, &b).unwrap();
        t.scalar(v)
    };
    let mut worst = 0.0f64;
    let mut work = store.clone();
    for id in store.ids() {
        let zero = Array2::zeros(store.get(id).dim());
        let analytic = grads.get(p[id]).unwrap_or(&zero).clone();
        for idx in 0..analytic.len() {
            let (r, c) = (idx / analytic.ncols(), idx % analytic.ncols());
            let orig = store.get(id)[[r, c]];
            work.get_mut(id)[[r, c]] = orig + STEP;
            let up = eval(&work);
            work.get_mut(id)[[r, c]] = orig - STEP;
            let down = eval(&work);
            work.get_mut(id)[[r, c]] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic[[r, c]];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform values in `±[0.1, 1]`, away from activation kinks.
pub fn away_from_zero(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let m = r.gen_range(0.1..1.0);
        if r.gen::<bool>() {
            m
        } else {
            -m
        }
    })
}

fn given(store: &mut ParamStore<f64>, name: &str, v: Array2<f64>) -> tgrn_core::nn::ParamId {
    store.insert(name, v, Init::Given).unwrap()
}

/// `sum(y * R)` for a fixed random `R`, so every output entry matters.
fn weighted_sum(tape: &Tape<f64>, y: Var, seed: u64) -> Result<Var, NnError> {
    let mut r = rng(seed);
    let w = away_from_zero(tape.shape(y).0, tape.shape(y).1, &mut r);
    let c = tape.constant(w)?;
    let m = tape.mul(y, c)?;
    tape.sum(m)
}

/// Small random graph with both directions of a ring plus random chords.
pub fn random_graph(n: usize, seed: u64) -> GraphInput<f64> {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        edges.push((i, (i + 1) % n, r.gen_range(0.2..1.0)));
    }
    for _ in 0..n {
        let (a, b) = (r.gen_range(0..n), r.gen_range(0..n));
        if a != b && !edges.iter().any(|e| (e.0, e.1) == (a, b)) {
            edges.push((a, b, r.gen_range(0.2..1.0)));
        }
    }
    let sym = SparseAdj::from_edges(n, &edges, true).unwrap();
    let dir = SparseAdj::from_edges(n, &edges, false).unwrap();
    GraphInput::new(&sym, &dir).unwrap()
}

fn op_checks(out: &mut Vec<(String, f64)>) {
    let mut r = rng(11);
    let n = 6;
    let g = random_graph(n, 3);
    let mut push = |name: &str, store: &ParamStore<f64>, f: &dyn Fn(&Tape<f64>, &Bound) -> Result<Var, NnError>| {
        out.push((format!("op:{name}"), max_rel_error(store, f)));
    };

    let mut s = ParamStore::new();
    let a = given(&mut s, "a", away_from_zero(n, 4, &mut r));
    let b = given(&mut s, "b", away_from_zero(4, 3, &mut r));
    let c = given(&mut s, "c", away_from_zero(n, 4, &mut r));
    let row = given(&mut s, "row", away_from_zero(1, 4, &mut r));
    let col = given(&mut s, "col", away_from_zero(n, 1, &mut r));

    push("matmul", &s, &|t, p| {
        let y = t.matmul(p[a], p[b])?;
        weighted_sum(t, y, 1)
    });
    let gcn = g.gcn.clone();
    push("spmm", &s, &|t, p| {
        let y = t.spmm(&gcn, p[a])?;
        weighted_sum(t, y, 2)
    });
    push("add", &s, &|t, p| {
        let y = t.add(p[a], p[c])?;
        weighted_sum(t, y, 3)
    });
    push("sub", &s, &|t, p| {
        let y = t.sub(p[a], p[c])?;
        weighted_sum(t, y, 4)
    });
    push("add_row", &s, &|t, p| {
        let y = t.add_row(p[a], p[row])?;
        weighted_sum(t, y, 5)
    });
    push("mul", &s, &|t, p| {
        let y = t.mul(p[a], p[c])?;
        weighted_sum(t, y, 6)
    });
    push("scale", &s, &|t, p| {
        let y = t.scale(p[a], -1.7)?;
        weighted_sum(t, y, 7)
    });
    push("one_minus", &s, &|t, p| {
        let y = t.one_minus(p[a])?;
        weighted_sum(t, y, 8)
    });
    push("concat_cols", &s, &|t, p| {
        let y = t.concat_cols(&[p[a], p[col], p[c]])?;
        weighted_sum(t, y, 9)
    });
    push("slice_cols", &s, &|t, p| {
        let y = t.slice_cols(p[a], 1, 3)?;
        weighted_sum(t, y, 10)
    });
    let idx = Rc::new(vec![0usize, 3, 3, 5, 1, 0, 2]);
    push("gather_rows", &s, &|t, p| {
        let y = t.gather_rows(p[a], &idx)?;
        weighted_sum(t, y, 11)
    });
    push("row_softmax", &s, &|t, p| {
        let y = t.row_softmax(p[a])?;
        weighted_sum(t, y, 12)
    });
    let offsets = Rc::new(vec![0usize, 2, 3, 6]);
    push("segment_softmax", &s, &|t, p| {
        let y = t.segment_softmax(p[col], &offsets)?;
        weighted_sum(t, y, 13)
    });
    push("segment_weighted_sum", &s, &|t, p| {
        let y = t.segment_weighted_sum(p[col], p[a], &offsets)?;
        weighted_sum(t, y, 14)
    });
    push("sigmoid", &s, &|t, p| {
        let y = t.sigmoid(p[a])?;
        weighted_sum(t, y, 15)
    });
    push("tanh", &s, &|t, p| {
        let y = t.tanh(p[a])?;
        weighted_sum(t, y, 16)
    });
    push("relu", &s, &|t, p| {
        let y = t.relu(p[a])?;
        weighted_sum(t, y, 17)
    });
    push("leaky_relu", &s, &|t, p| {
        let y = t.leaky_relu(p[a], 0.2)?;
        weighted_sum(t, y, 18)
    });
    push("sum", &s, &|t, p| {
        let y = t.mul(p[a], p[c])?;
        t.sum(y)
    });
    push("mean", &s, &|t, p| {
        let y = t.mul(p[a], p[a])?;
        t.mean(y)
    });
    push("row_sum", &s, &|t, p| {
        let y = t.row_sum(p[a])?;
        weighted_sum(t, y, 19)
    });
    push("mse", &s, &|t, p| t.mse(p[a], p[c]));
    let labels = Array2::from_shape_fn((n, 1), |(i, _)| (i % 2) as f64);
    push("bce_with_logits", &s, &|t, p| t.bce_with_logits(p[col], labels.clone()));
}

fn layer_checks(out: &mut Vec<(String, f64)>) {
    let mut r = rng(21);
    let n = 6;
    let g = random_graph(n, 5);
    let x = away_from_zero(n, 3, &mut r);
    let h0 = away_from_zero(n, 4, &mut r);

    let mut s = ParamStore::new();
    let xi = given(&mut s, "x", x.clone());
    let lin = Linear::new(&mut s, "lin", 3, 4, true, 1).unwrap();
    randomize(&mut s, 31);
    out.push(("layer:linear".into(), max_rel_error(&s, |t, p| {
        let y = lin.forward(t, p, p[xi])?;
        weighted_sum(t, y, 1)
    })));

    let mut s = ParamStore::new();
    let xi = given(&mut s, "x", x.clone());
    let gcn = GcnConv::new(&mut s, "gcn", 3, 4, 2).unwrap();
    randomize(&mut s, 32);
    out.push(("layer:gcn_conv".into(), max_rel_error(&s, |t, p| {
        let y = gcn.forward(t, p, &g, p[xi])?;
        weighted_sum(t, y, 2)
    })));

    let mut s = ParamStore::new();
    let xi = given(&mut s, "x", x.clone());
    let cheb = ChebConv::new(&mut s, "cheb", 3, 4, 3, true, 3).unwrap();
    randomize(&mut s, 33);
    out.push(("layer:cheb_conv".into(), max_rel_error(&s, |t, p| {
        let y = cheb.forward(t, p, &g, p[xi])?;
        weighted_sum(t, y, 3)
    })));

    let mut s = ParamStore::new();
    let xi = given(&mut s, "x", x.clone());
    let gat = GatConv::new(&mut s, "gat", 3, 4, 2, 4).unwrap();
    randomize(&mut s, 34);
    out.push(("layer:gat_conv".into(), max_rel_error(&s, |t, p| {
        let y = gat.forward(t, p, &g, p[xi])?;
        weighted_sum(t, y, 4)
    })));

    let mut s = ParamStore::new();
    let xi = given(&mut s, "x", x.clone());
    let hi = given(&mut s, "h", h0.clone());
    let gru = GruCell::new(&mut s, "gru", 3, 4, 5).unwrap();
    randomize(&mut s, 35);
    out.push(("layer:gru_cell".into(), max_rel_error(&s, |t, p| {
        let y = gru.forward(t, p, p[xi], p[hi])?;
        weighted_sum(t, y, 5)
    })));

    let mut s = ParamStore::new();
    let xi = given(&mut s, "x", x.clone());
    let hi = given(&mut s, "h", h0.clone());
    let ggru = GraphGruCell::new(&mut s, "ggru", 3, 4, 2, 6).unwrap();
    randomize(&mut s, 36);
    out.push(("layer:graph_gru_cell".into(), max_rel_error(&s, |t, p| {
        let y = ggru.forward(t, p, &g, p[xi], p[hi])?;
        weighted_sum(t, y, 6)
    })));

    let mut s = ParamStore::new();
    let wi = given(&mut s, "w", away_from_zero(3, 4, &mut r));
    let mg = MatrixGru::new(&mut s, "mgru", 3, 4, 7).unwrap();
    randomize(&mut s, 37);
    out.push(("layer:matrix_gru".into(), max_rel_error(&s, |t, p| {
        let y = mg.forward(t, p, p[wi])?;
        weighted_sum(t, y, 7)
    })));

    let src = Rc::new(vec![0usize, 1, 2, 5, 4]);
    let dst = Rc::new(vec![1usize, 0, 4, 2, 4]);
    let labels = Array2::from_shape_vec((5, 1), vec![1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
    for decoder in [DecoderKind::Dot, DecoderKind::Mlp] {
        let cfg = tiny_config(decoder);
        let mut m = Model::<f64>::new(Family::Linear, &cfg, HeadKind::Link, 3, 8).unwrap();
        let hi = m.params_mut().insert("h_in", h0.clone(), Init::Given).unwrap();
        randomize(m.params_mut(), 38);
        let name = format!("decoder:{decoder:?}").to_lowercase();
        out.push((name, max_rel_error(m.params(), |t, p| {
            let logits = m.decode_link(t, p, p[hi], &src, &dst)?;
            t.bce_with_logits(logits, labels.clone())
        })));
    }
    let cfg = tiny_config(DecoderKind::Dot);
    let mut m = Model::<f64>::new(Family::Linear, &cfg, HeadKind::Node, 3, 9).unwrap();
    let hi = m.params_mut().insert("h_in", h0.clone(), Init::Given).unwrap();
    randomize(m.params_mut(), 39);
    let target = away_from_zero(n, 1, &mut r);
    out.push(("decoder:node".into(), max_rel_error(m.params(), |t, p| {
        let y = m.decode_node(t, p, p[hi])?;
        let c = t.constant(target.clone())?;
        t.mse(y, c)
    })));
}

pub fn tiny_config(decoder: DecoderKind) -> ModelConfig {
    ModelConfig {
        hidden: 4,
        layers: 2,
        cheb_k: 2,
        heads: 2,
        dropout: 0.0,
        decoder,
    }
}

/// Overwrites every parameter with random values so zero-initialized biases
/// are exercised too.
pub fn randomize(store: &mut ParamStore<f64>, seed: u64) {
    let mut r = rng(seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for e in store.get_mut(id).iter_mut() {
            *e = r.gen_range(-0.6..0.6);
        }
    }
}

fn model_checks(out: &mut Vec<(String, f64)>) {
    let n = 5;
    let d_in = 3;
    let g = random_graph(n, 7);
    let mut r = rng(41);
    let x = away_from_zero(n, d_in, &mut r);
    let src = Rc::new(vec![0usize, 1, 3, 4, 2, 0]);
    let dst = Rc::new(vec![1usize, 3, 2, 0, 4, 4]);
    let labels = Array2::from_shape_vec((6, 1), vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
    let target = away_from_zero(n, 1, &mut r);
    for family in Family::ALL.into_iter().filter(|f| f.is_learned()) {
        for head in [HeadKind::Link, HeadKind::Node] {
            let cfg = tiny_config(DecoderKind::Dot);
            let mut m = Model::<f64>::new(family, &cfg, head, d_in, 10).unwrap();
            randomize(m.params_mut(), 42);
            assert!(m.params().n_scalars() <= 500, "{family} has {} parameters", m.params().n_scalars());
            let states = [ModelState::initial(), carried_state(&m, &g, &x)];
            for (si, state) in states.iter().enumerate() {
                let err = max_rel_error(m.params(), |t, p| {
                    let xv = t.constant(x.clone())?;
                    let enc = m.encode::<ChaCha8Rng>(t, p, &g, xv, state, None)?;
                    match head {
                        HeadKind::Link => {
                            let logits = m.decode_link(t, p, enc.h, &src, &dst)?;
                            t.bce_with_logits(logits, labels.clone())
                        }
                        HeadKind::Node => {
                            let y = m.decode_node(t, p, enc.h)?;
                            let c = t.constant(target.clone())?;
                            t.mse(y, c)
                        }
                    }
                });
                let head_name = match head {
                    HeadKind::Link => "link",
                    HeadKind::Node => "node",
                };
                let phase = if si == 0 { "first" } else { "carried" };
                out.push((format!("model:{family}:{head_name}:{phase}"), err));
            }
        }
    }
}

fn carried_state(m: &Model<f64>, g: &GraphInput<f64>, x: &Array2<f64>) -> ModelState<f64> {
    m.embed(g, x, &ModelState::initial()).unwrap().1
}

/// Every check with its worst relative error.
pub fn all_checks() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    op_checks(&mut out);
    layer_checks(&mut out);
    model_checks(&mut out);
    out
}
