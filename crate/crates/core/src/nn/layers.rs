//! Parameterized layers. Each layer registers its parameters in a
//! [`ParamStore`] at construction and reads them through a [`Bound`] set
//! during the forward pass.

use std::rc::Rc;

use super::graph::GraphInput;
use super::params::{Bound, ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::NnError;
use crate::scalar::Scalar;
use crate::seed::derive_seed;

/// `x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        seed: u64,
    ) -> Result<Self, NnError> {
        let w = store.glorot(&format!("{name}.w"), d_in, d_out, derive_seed(seed, name))?;
        let b = if bias {
            Some(store.zeros(&format!("{name}.b"), 1, d_out)?)
        } else {
            None
        };
        Ok(Self { w, b })
    }

    pub fn forward<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var, NnError> {
        let y = tape.matmul(x, p[self.w])?;
        match self.b {
            Some(b) => tape.add_row(y, p[b]),
            None => Ok(y),
        }
    }
}

/// `D^{-1/2}(A+I)D^{-1/2} X W + b`.
#[derive(Clone, Debug)]
pub struct GcnConv {
    pub lin: Linear,
}

impl GcnConv {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        seed: u64,
    ) -> Result<Self, NnError> {
        Ok(Self {
            lin: Linear::new(store, name, d_in, d_out, true, seed)?,
        })
    }

    /// Convolution with an explicit weight variable; the bias still comes
    /// from the store.
    pub fn forward_with<T: Scalar>(
        &self,
        tape: &Tape<T>,
        p: &Bound,
        g: &GraphInput<T>,
        x: Var,
        w: Var,
    ) -> Result<Var, NnError> {
        let xw = tape.matmul(x, w)?;
        let y = tape.spmm(&g.gcn, xw)?;
        match self.lin.b {
            Some(b) => tape.add_row(y, p[b]),
            None => Ok(y),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, g: &GraphInput<T>, x: Var) -> Result<Var, NnError> {
        self.forward_with(tape, p, g, x, p[self.lin.w])
    }
}

/// `sum_k T_k(L^) X W_k + b` with the Chebyshev recurrence.
#[derive(Clone, Debug)]
pub struct ChebConv {
    pub weights: Vec<ParamId>,
    pub b: Option<ParamId>,
}

impl ChebConv {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        k: usize,
        bias: bool,
        seed: u64,
    ) -> Result<Self, NnError> {
        if k == 0 {
            return Err(NnError::InvalidConfig("Chebyshev order K must be >= 1".into()));
        }
        let weights = (0..k)
            .map(|i| {
                let pname = format!("{name}.w{i}");
                store.glorot(&pname, d_in, d_out, derive_seed(seed, &pname))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let b = if bias {
            Some(store.zeros(&format!("{name}.b"), 1, d_out)?)
        } else {
            None
        };
        Ok(Self { weights, b })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Chebyshev basis `T_0 X .. T_{K-1} X`.
    pub fn basis<T: Scalar>(tape: &Tape<T>, lhat: &Rc<crate::sparse::CsrMatrix<T>>, x: Var, k: usize) -> Result<Vec<Var>, NnError> {
        let mut out = vec![x];
        if k > 1 {
            out.push(tape.spmm(lhat, x)?);
        }
        for i in 2..k {
            let lt = tape.spmm(lhat, out[i - 1])?;
            let twice = tape.scale(lt, T::of(2.0))?;
            out.push(tape.sub(twice, out[i - 2])?);
        }
        Ok(out)
    }

    pub fn forward<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, g: &GraphInput<T>, x: Var) -> Result<Var, NnError> {
        let basis = Self::basis(tape, &g.lhat, x, self.k())?;
        let mut acc = tape.matmul(basis[0], p[self.weights[0]])?;
        for (tx, &w) in basis.iter().zip(&self.weights).skip(1) {
            let term = tape.matmul(*tx, p[w])?;
            acc = tape.add(acc, term)?;
        }
        match self.b {
            Some(b) => tape.add_row(acc, p[b]),
            None => Ok(acc),
        }
    }
}

/// Multi-head graph attention over in-neighbourhoods (self loop included).
/// Head outputs are concatenated.
#[derive(Clone, Debug)]
pub struct GatConv {
    pub heads: usize,
    pub head_dim: usize,
    pub w: ParamId,
    pub a_src: Vec<ParamId>,
    pub a_dst: Vec<ParamId>,
    pub b: ParamId,
    pub slope: f64,
}

impl GatConv {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        heads: usize,
        seed: u64,
    ) -> Result<Self, NnError> {
        if heads == 0 || !d_out.is_multiple_of(heads) {
            return Err(NnError::InvalidConfig(format!(
                "output width {d_out} not divisible by {heads} heads"
            )));
        }
        let head_dim = d_out / heads;
        let wname = format!("{name}.w");
        let w = store.glorot(&wname, d_in, d_out, derive_seed(seed, &wname))?;
        let mut a_src = Vec::with_capacity(heads);
        let mut a_dst = Vec::with_capacity(heads);
        for h in 0..heads {
            let s = format!("{name}.a_src{h}");
            let d = format!("{name}.a_dst{h}");
            a_src.push(store.glorot(&s, head_dim, 1, derive_seed(seed, &s))?);
            a_dst.push(store.glorot(&d, head_dim, 1, derive_seed(seed, &d))?);
        }
        let b = store.zeros(&format!("{name}.b"), 1, d_out)?;
        Ok(Self {
            heads,
            head_dim,
            w,
            a_src,
            a_dst,
            b,
            slope: 0.2,
        })
    }

    /// Output and per-head attention weights (one `m × 1` column per head,
    /// ordered like `g.neighbourhoods`).
    pub fn forward_with_attention<T: Scalar>(
        &self,
        tape: &Tape<T>,
        p: &Bound,
        g: &GraphInput<T>,
        x: Var,
    ) -> Result<(Var, Vec<Var>), NnError> {
        let nb = &g.neighbourhoods;
        let wh = tape.matmul(x, p[self.w])?;
        let mut outs = Vec::with_capacity(self.heads);
        let mut alphas = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let whh = tape.slice_cols(wh, h * self.head_dim, (h + 1) * self.head_dim)?;
            let s_src = tape.matmul(whh, p[self.a_src[h]])?;
            let s_dst = tape.matmul(whh, p[self.a_dst[h]])?;
            let e_src = tape.gather_rows(s_src, &nb.src)?;
            let e_dst = tape.gather_rows(s_dst, &nb.dst)?;
            let e = tape.add(e_dst, e_src)?;
            let e = tape.leaky_relu(e, T::of(self.slope))?;
            let alpha = tape.segment_softmax(e, &nb.offsets)?;
            let msg = tape.gather_rows(whh, &nb.src)?;
            outs.push(tape.segment_weighted_sum(alpha, msg, &nb.offsets)?);
            alphas.push(alpha);
        }
        let cat = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs)? };
        Ok((tape.add_row(cat, p[self.b])?, alphas))
    }

    pub fn forward<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, g: &GraphInput<T>, x: Var) -> Result<Var, NnError> {
        Ok(self.forward_with_attention(tape, p, g, x)?.0)
    }
}

/// `h' = z ⊙ h + (1 - z) ⊙ tanh(x W_h + (r ⊙ h) U_h + b_h)`.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub wz: Linear,
    pub uz: Linear,
    pub wr: Linear,
    pub ur: Linear,
    pub wh: Linear,
    pub uh: Linear,
}

fn gru_combine<T: Scalar>(tape: &Tape<T>, z: Var, h: Var, cand: Var) -> Result<Var, NnError> {
    let keep = tape.mul(z, h)?;
    let omz = tape.one_minus(z)?;
    let new = tape.mul(omz, cand)?;
    tape.add(keep, new)
}

impl GruCell {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_h: usize,
        seed: u64,
    ) -> Result<Self, NnError> {
        let mut mk = |part: &str, rows: usize, bias: bool| {
            Linear::new(store, &format!("{name}.{part}"), rows, d_h, bias, seed)
        };
        Ok(Self {
            wz: mk("wz", d_in, true)?,
            uz: mk("uz", d_h, false)?,
            wr: mk("wr", d_in, true)?,
            ur: mk("ur", d_h, false)?,
            wh: mk("wh", d_in, true)?,
            uh: mk("uh", d_h, false)?,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, x: Var, h: Var) -> Result<Var, NnError> {
        let gate = |w: &Linear, u: &Linear, hv: Var| -> Result<Var, NnError> {
            let a = w.forward(tape, p, x)?;
            let b = u.forward(tape, p, hv)?;
            tape.add(a, b)
        };
        let z = tape.sigmoid(gate(&self.wz, &self.uz, h)?)?;
        let r = tape.sigmoid(gate(&self.wr, &self.ur, h)?)?;
        let rh = tape.mul(r, h)?;
        let cand = tape.tanh(gate(&self.wh, &self.uh, rh)?)?;
        gru_combine(tape, z, h, cand)
    }
}

/// GRU whose six linear maps are Chebyshev convolutions.
#[derive(Clone, Debug)]
pub struct GraphGruCell {
    pub xz: ChebConv,
    pub hz: ChebConv,
    pub xr: ChebConv,
    pub hr: ChebConv,
    pub xh: ChebConv,
    pub hh: ChebConv,
}

impl GraphGruCell {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_h: usize,
        k: usize,
        seed: u64,
    ) -> Result<Self, NnError> {
        let mut mk = |part: &str, rows: usize, bias: bool| {
            ChebConv::new(store, &format!("{name}.{part}"), rows, d_h, k, bias, seed)
        };
        Ok(Self {
            xz: mk("xz", d_in, true)?,
            hz: mk("hz", d_h, false)?,
            xr: mk("xr", d_in, true)?,
            hr: mk("hr", d_h, false)?,
            xh: mk("xh", d_in, true)?,
            hh: mk("hh", d_h, false)?,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &Tape<T>,
        p: &Bound,
        g: &GraphInput<T>,
        x: Var,
        h: Var,
    ) -> Result<Var, NnError> {
        let gate = |a: &ChebConv, b: &ChebConv, hv: Var| -> Result<Var, NnError> {
            let u = a.forward(tape, p, g, x)?;
            let v = b.forward(tape, p, g, hv)?;
            tape.add(u, v)
        };
        let z = tape.sigmoid(gate(&self.xz, &self.hz, h)?)?;
        let r = tape.sigmoid(gate(&self.xr, &self.hr, h)?)?;
        let rh = tape.mul(r, h)?;
        let cand = tape.tanh(gate(&self.xh, &self.hh, rh)?)?;
        gru_combine(tape, z, h, cand)
    }
}

/// GRU over a weight matrix `W` (`d_in × d_out`) used as both input and
/// state: `Z = σ(W_Z W + U_Z W + B_Z)` and likewise for the other gates.
#[derive(Clone, Debug)]
pub struct MatrixGru {
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub uh: ParamId,
    pub bh: ParamId,
}

impl MatrixGru {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        seed: u64,
    ) -> Result<Self, NnError> {
        let mut sq = |part: &str| {
            let n = format!("{name}.{part}");
            store.glorot(&n, d_in, d_in, derive_seed(seed, &n))
        };
        let (wz, uz, wr, ur, wh, uh) = (sq("wz")?, sq("uz")?, sq("wr")?, sq("ur")?, sq("wh")?, sq("uh")?);
        Ok(Self {
            wz,
            uz,
            wr,
            ur,
            wh,
            uh,
            bz: store.zeros(&format!("{name}.bz"), d_in, d_out)?,
            br: store.zeros(&format!("{name}.br"), d_in, d_out)?,
            bh: store.zeros(&format!("{name}.bh"), d_in, d_out)?,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, w: Var) -> Result<Var, NnError> {
        let gate = |a: ParamId, u: ParamId, b: ParamId, state: Var| -> Result<Var, NnError> {
            let x = tape.matmul(p[a], w)?;
            let h = tape.matmul(p[u], state)?;
            let s = tape.add(x, h)?;
            tape.add(s, p[b])
        };
        let z = tape.sigmoid(gate(self.wz, self.uz, self.bz, w)?)?;
        let r = tape.sigmoid(gate(self.wr, self.ur, self.br, w)?)?;
        let rw = tape.mul(r, w)?;
        let cand = tape.tanh(gate(self.wh, self.uh, self.bh, rw)?)?;
        gru_combine(tape, z, w, cand)
    }
}

/// Inverted dropout with a constant mask drawn from `rng`.
pub fn dropout<T: Scalar>(
    tape: &Tape<T>,
    x: Var,
    rate: f64,
    rng: &mut impl rand::Rng,
) -> Result<Var, NnError> {
    if rate <= 0.0 {
        return Ok(x);
    }
    let keep = 1.0 - rate;
    let scale = T::of(1.0 / keep);
    let mask = ndarray::Array2::from_shape_simple_fn(tape.shape(x), || {
        if rng.gen::<f64>() < keep {
            scale
        } else {
            T::zero()
        }
    });
    let m = tape.constant(mask)?;
    tape.mul(x, m)
}
