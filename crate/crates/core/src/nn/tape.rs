//! Reverse-mode differentiation over 2-D tensors.
//!
//! Every operation records its inputs on a [`Tape`] and returns a [`Var`]
//! handle. [`Tape::backward`] walks the record in reverse and accumulates
//! exact gradients. All values are matrices; scalars are `1 × 1`.

use std::cell::RefCell;
use std::rc::Rc;

use ndarray::{s, Array2, Axis, Zip};

use super::NnError;
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Spmm(Rc<CsrMatrix<T>>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Gather(Var, Rc<Vec<usize>>),
    RowSoftmax(Var),
    SegmentSoftmax(Var, Rc<Vec<usize>>),
    SegmentWeightedSum(Var, Var, Rc<Vec<usize>>),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    LeakyRelu(Var, T),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    Mse(Var, Var),
    BceWithLogits(Var, Rc<Array2<T>>),
}

struct Node<T> {
    value: Rc<Array2<T>>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recording of one forward pass.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every recorded value.
pub struct Gradients<T> {
    grads: Vec<Option<Array2<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> NnError {
    NnError::ShapeMismatch(format!("{op}: {a:?} vs {b:?}"))
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn check_offsets(op: &str, offsets: &[usize], m: usize) -> Result<(), NnError> {
    let ok = !offsets.is_empty()
        && offsets[0] == 0
        && *offsets.last().unwrap() == m
        && offsets.windows(2).all(|w| w[0] <= w[1]);
    if ok {
        Ok(())
    } else {
        Err(NnError::ShapeMismatch(format!(
            "{op}: segment offsets do not partition {m} rows"
        )))
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Array2<T>, op: Op<T>, needs_grad: bool, name: &str) -> Result<Var, NnError> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(NnError::Numerical(format!("non-finite output from {name}")));
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            needs_grad,
        });
        Ok(Var(nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].needs_grad
    }

    /// Shared handle to the value of `v`.
    pub fn value(&self, v: Var) -> Rc<Array2<T>> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.dim()
    }

    /// Value of a `1 × 1` variable.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes.borrow()[v.0].value[[0, 0]]
    }

    /// Differentiable leaf.
    pub fn var(&self, value: Array2<T>) -> Result<Var, NnError> {
        self.push(value, Op::Leaf, true, "var")
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&self, value: Array2<T>) -> Result<Var, NnError> {
        self.push(value, Op::Leaf, false, "constant")
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var, NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(shape_err("matmul", va.shape(), vb.shape()));
        }
        let out = va.dot(&*vb);
        self.push(out, Op::MatMul(a, b), self.needs(a) || self.needs(b), "matmul")
    }

    /// Constant sparse matrix times a dense variable.
    pub fn spmm(&self, s: &Rc<CsrMatrix<T>>, x: Var) -> Result<Var, NnError> {
        let vx = self.value(x);
        if s.ncols() != vx.nrows() {
            return Err(shape_err("spmm", &[s.nrows(), s.ncols()], vx.shape()));
        }
        let out = s.spmm(&vx);
        self.push(out, Op::Spmm(Rc::clone(s), x), self.needs(x), "spmm")
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<(Rc<Array2<T>>, Rc<Array2<T>>), NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dim() != vb.dim() {
            return Err(shape_err(op, va.shape(), vb.shape()));
        }
        Ok((va, vb))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var, NnError> {
        let (va, vb) = self.same_shape("add", a, b)?;
        let out = &*va + &*vb;
        self.push(out, Op::Add(a, b), self.needs(a) || self.needs(b), "add")
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var, NnError> {
        let (va, vb) = self.same_shape("sub", a, b)?;
        let out = &*va - &*vb;
        self.push(out, Op::Sub(a, b), self.needs(a) || self.needs(b), "sub")
    }

    /// `a + 1 b` where `b` is a `1 × d` row broadcast over the rows of `a`.
    pub fn add_row(&self, a: Var, b: Var) -> Result<Var, NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        if vb.nrows() != 1 || vb.ncols() != va.ncols() {
            return Err(shape_err("add_row", va.shape(), vb.shape()));
        }
        let out = &*va + &vb.row(0);
        self.push(out, Op::AddRow(a, b), self.needs(a) || self.needs(b), "add_row")
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var, NnError> {
        let (va, vb) = self.same_shape("mul", a, b)?;
        let out = &*va * &*vb;
        self.push(out, Op::Mul(a, b), self.needs(a) || self.needs(b), "mul")
    }

    pub fn scale(&self, a: Var, c: T) -> Result<Var, NnError> {
        let out = &*self.value(a) * c;
        self.push(out, Op::Scale(a, c), self.needs(a), "scale")
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&self, a: Var) -> Result<Var, NnError> {
        let neg = self.scale(a, -T::one())?;
        let ones = self.constant(Array2::from_elem(self.shape(a), T::one()))?;
        self.add(neg, ones)
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var, NnError> {
        if parts.is_empty() {
            return Err(NnError::ShapeMismatch("concat_cols: no inputs".into()));
        }
        let values: Vec<Rc<Array2<T>>> = parts.iter().map(|&p| self.value(p)).collect();
        let rows = values[0].nrows();
        if let Some(bad) = values.iter().find(|v| v.nrows() != rows) {
            return Err(shape_err("concat_cols", values[0].shape(), bad.shape()));
        }
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(out, Op::Concat(parts.to_vec()), needs, "concat_cols")
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Result<Var, NnError> {
        let va = self.value(a);
        if start >= end || end > va.ncols() {
            return Err(NnError::ShapeMismatch(format!(
                "slice_cols {start}..{end} of {} columns",
                va.ncols()
            )));
        }
        let out = va.slice(s![.., start..end]).to_owned();
        self.push(out, Op::Slice(a, start), self.needs(a), "slice_cols")
    }

    /// Rows of `a` selected by `idx` (repetition allowed).
    pub fn gather_rows(&self, a: Var, idx: &Rc<Vec<usize>>) -> Result<Var, NnError> {
        let va = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= va.nrows()) {
            return Err(NnError::ShapeMismatch(format!(
                "gather_rows: index {bad} of {} rows",
                va.nrows()
            )));
        }
        let out = va.select(Axis(0), idx);
        self.push(out, Op::Gather(a, Rc::clone(idx)), self.needs(a), "gather_rows")
    }

    pub fn row_softmax(&self, a: Var) -> Result<Var, NnError> {
        let mut out = (*self.value(a)).clone();
        for mut row in out.rows_mut() {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            row.mapv_inplace(|v| (v - m).exp());
            let z: T = row.sum();
            row.mapv_inplace(|v| v / z);
        }
        self.push(out, Op::RowSoftmax(a), self.needs(a), "row_softmax")
    }

    /// Softmax of an `m × 1` column within each segment
    /// `offsets[i]..offsets[i+1]`.
    pub fn segment_softmax(&self, a: Var, offsets: &Rc<Vec<usize>>) -> Result<Var, NnError> {
        let va = self.value(a);
        if va.ncols() != 1 {
            return Err(shape_err("segment_softmax", va.shape(), &[va.nrows(), 1]));
        }
        check_offsets("segment_softmax", offsets, va.nrows())?;
        let mut out = (*va).clone();
        for w in offsets.windows(2) {
            if w[0] == w[1] {
                continue;
            }
            let mut seg = out.slice_mut(s![w[0]..w[1], 0]);
            let m = seg.iter().copied().fold(T::neg_infinity(), T::max);
            seg.mapv_inplace(|v| (v - m).exp());
            let z: T = seg.sum();
            seg.mapv_inplace(|v| v / z);
        }
        let needs = self.needs(a);
        self.push(out, Op::SegmentSoftmax(a, Rc::clone(offsets)), needs, "segment_softmax")
    }

    /// Row `i` of the output is `sum_{e in segment i} w[e] * values[e]`.
    pub fn segment_weighted_sum(
        &self,
        w: Var,
        values: Var,
        offsets: &Rc<Vec<usize>>,
    ) -> Result<Var, NnError> {
        let (vw, vv) = (self.value(w), self.value(values));
        if vw.ncols() != 1 || vw.nrows() != vv.nrows() {
            return Err(shape_err("segment_weighted_sum", vw.shape(), vv.shape()));
        }
        check_offsets("segment_weighted_sum", offsets, vv.nrows())?;
        let n = offsets.len() - 1;
        let mut out = Array2::<T>::zeros((n, vv.ncols()));
        for i in 0..n {
            let mut row = out.row_mut(i);
            for e in offsets[i]..offsets[i + 1] {
                row.scaled_add(vw[[e, 0]], &vv.row(e));
            }
        }
        let needs = self.needs(w) || self.needs(values);
        self.push(
            out,
            Op::SegmentWeightedSum(w, values, Rc::clone(offsets)),
            needs,
            "segment_weighted_sum",
        )
    }

    pub fn sigmoid(&self, a: Var) -> Result<Var, NnError> {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a), self.needs(a), "sigmoid")
    }

    pub fn tanh(&self, a: Var) -> Result<Var, NnError> {
        let out = self.value(a).mapv(T::tanh);
        self.push(out, Op::Tanh(a), self.needs(a), "tanh")
    }

    pub fn relu(&self, a: Var) -> Result<Var, NnError> {
        let out = self.value(a).mapv(|v| v.max(T::zero()));
        self.push(out, Op::Relu(a), self.needs(a), "relu")
    }

    pub fn leaky_relu(&self, a: Var, slope: T) -> Result<Var, NnError> {
        let out = self
            .value(a)
            .mapv(|v| if v > T::zero() { v } else { v * slope });
        self.push(out, Op::LeakyRelu(a, slope), self.needs(a), "leaky_relu")
    }

    pub fn sum(&self, a: Var) -> Result<Var, NnError> {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::Sum(a), self.needs(a), "sum")
    }

    pub fn mean(&self, a: Var) -> Result<Var, NnError> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(NnError::ShapeMismatch("mean of empty tensor".into()));
        }
        let out = Array2::from_elem((1, 1), va.sum() / T::of(va.len() as f64));
        self.push(out, Op::Mean(a), self.needs(a), "mean")
    }

    /// `n × d → n × 1` row sums.
    pub fn row_sum(&self, a: Var) -> Result<Var, NnError> {
        let out = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(out, Op::RowSum(a), self.needs(a), "row_sum")
    }

    /// Mean squared error.
    pub fn mse(&self, pred: Var, target: Var) -> Result<Var, NnError> {
        let (vp, vt) = self.same_shape("mse", pred, target)?;
        if vp.is_empty() {
            return Err(NnError::ShapeMismatch("mse of empty tensor".into()));
        }
        let n = T::of(vp.len() as f64);
        let loss = Zip::from(&*vp)
            .and(&*vt)
            .fold(T::zero(), |acc, &p, &t| acc + (p - t) * (p - t))
            / n;
        let needs = self.needs(pred) || self.needs(target);
        self.push(Array2::from_elem((1, 1), loss), Op::Mse(pred, target), needs, "mse")
    }

    /// Mean binary cross-entropy of logits against constant 0/1 labels,
    /// computed as `max(x,0) - x y + ln(1 + e^{-|x|})`.
    pub fn bce_with_logits(&self, logits: Var, labels: Array2<T>) -> Result<Var, NnError> {
        let vx = self.value(logits);
        if vx.dim() != labels.dim() {
            return Err(shape_err("bce_with_logits", vx.shape(), labels.shape()));
        }
        if vx.is_empty() {
            return Err(NnError::ShapeMismatch("bce of empty tensor".into()));
        }
        let n = T::of(vx.len() as f64);
        let loss = Zip::from(&*vx).and(&labels).fold(T::zero(), |acc, &x, &y| {
            acc + x.max(T::zero()) - x * y + (-x.abs()).exp().ln_1p()
        }) / n;
        let needs = self.needs(logits);
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::BceWithLogits(logits, Rc::new(labels)),
            needs,
            "bce_with_logits",
        )
    }

    /// Gradients of the `1 × 1` value `loss` with respect to every
    /// differentiable value recorded before it.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, NnError> {
        let nodes = self.nodes.borrow();
        if nodes[loss.0].value.dim() != (1, 1) {
            return Err(NnError::ShapeMismatch(format!(
                "backward needs a scalar loss, got {:?}",
                nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Array2<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::from_elem((1, 1), T::one()));

        fn acc<T: Scalar>(grads: &mut [Option<Array2<T>>], needs: bool, v: Var, g: Array2<T>) {
            if !needs {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.scaled_add(T::one(), &g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let need = |v: Var| nodes[v.0].needs_grad;
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if need(*a) {
                        acc(&mut grads, true, *a, g.dot(&val(*b).t()));
                    }
                    if need(*b) {
                        acc(&mut grads, true, *b, val(*a).t().dot(&g));
                    }
                }
                Op::Spmm(sp, x) => acc(&mut grads, need(*x), *x, sp.spmm_transpose(&g)),
                Op::Add(a, b) => {
                    acc(&mut grads, need(*b), *b, g.clone());
                    acc(&mut grads, need(*a), *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, need(*b), *b, g.mapv(|v| -v));
                    acc(&mut grads, need(*a), *a, g);
                }
                Op::AddRow(a, b) => {
                    acc(&mut grads, need(*b), *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, need(*a), *a, g);
                }
                Op::Mul(a, b) => {
                    if need(*a) {
                        acc(&mut grads, true, *a, &g * &**val(*b));
                    }
                    if need(*b) {
                        acc(&mut grads, true, *b, &g * &**val(*a));
                    }
                }
                Op::Scale(a, c) => acc(&mut grads, need(*a), *a, g * *c),
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = val(*p).ncols();
                        acc(
                            &mut grads,
                            need(*p),
                            *p,
                            g.slice(s![.., start..start + w]).to_owned(),
                        );
                        start += w;
                    }
                }
                Op::Slice(a, start) => {
                    let mut full = Array2::<T>::zeros(val(*a).dim());
                    full.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads, need(*a), *a, full);
                }
                Op::Gather(a, idx) => {
                    let mut full = Array2::<T>::zeros(val(*a).dim());
                    for (r, &src) in idx.iter().enumerate() {
                        full.row_mut(src).scaled_add(T::one(), &g.row(r));
                    }
                    acc(&mut grads, need(*a), *a, full);
                }
                Op::RowSoftmax(a) => {
                    let y = &node.value;
                    let mut dx = &g * &**y;
                    for (mut row, yrow) in dx.rows_mut().into_iter().zip(y.rows()) {
                        let dot: T = row.sum();
                        Zip::from(&mut row).and(&yrow).for_each(|d, &yv| *d = *d - yv * dot);
                    }
                    acc(&mut grads, need(*a), *a, dx);
                }
                Op::SegmentSoftmax(a, offsets) => {
                    let y = &node.value;
                    let mut dx = &g * &**y;
                    for w in offsets.windows(2) {
                        let dot: T = dx.slice(s![w[0]..w[1], 0]).sum();
                        for e in w[0]..w[1] {
                            dx[[e, 0]] = dx[[e, 0]] - y[[e, 0]] * dot;
                        }
                    }
                    acc(&mut grads, need(*a), *a, dx);
                }
                Op::SegmentWeightedSum(w, v, offsets) => {
                    let (vw, vv) = (val(*w), val(*v));
                    let mut dw = Array2::<T>::zeros(vw.dim());
                    let mut dv = Array2::<T>::zeros(vv.dim());
                    for seg in 0..offsets.len() - 1 {
                        let grow = g.row(seg);
                        for e in offsets[seg]..offsets[seg + 1] {
                            dw[[e, 0]] = grow.dot(&vv.row(e));
                            dv.row_mut(e).scaled_add(vw[[e, 0]], &grow);
                        }
                    }
                    acc(&mut grads, need(*w), *w, dw);
                    acc(&mut grads, need(*v), *v, dv);
                }
                Op::Sigmoid(a) => {
                    let dx = Zip::from(&g)
                        .and(&*node.value)
                        .map_collect(|&gv, &y| gv * y * (T::one() - y));
                    acc(&mut grads, need(*a), *a, dx);
                }
                Op::Tanh(a) => {
                    let dx = Zip::from(&g)
                        .and(&*node.value)
                        .map_collect(|&gv, &y| gv * (T::one() - y * y));
                    acc(&mut grads, need(*a), *a, dx);
                }
                Op::Relu(a) => {
                    let dx = Zip::from(&g).and(&**val(*a)).map_collect(|&gv, &x| {
                        if x > T::zero() {
                            gv
                        } else {
                            T::zero()
                        }
                    });
                    acc(&mut grads, need(*a), *a, dx);
                }
                Op::LeakyRelu(a, slope) => {
                    let dx = Zip::from(&g).and(&**val(*a)).map_collect(|&gv, &x| {
                        if x > T::zero() {
                            gv
                        } else {
                            gv * *slope
                        }
                    });
                    acc(&mut grads, need(*a), *a, dx);
                }
                Op::Sum(a) => {
                    let dx = Array2::from_elem(val(*a).dim(), g[[0, 0]]);
                    acc(&mut grads, need(*a), *a, dx);
                }
                Op::Mean(a) => {
                    let va = val(*a);
                    let dx = Array2::from_elem(va.dim(), g[[0, 0]] / T::of(va.len() as f64));
                    acc(&mut grads, need(*a), *a, dx);
                }
                Op::RowSum(a) => {
                    let va = val(*a);
                    let dx = Array2::from_shape_fn(va.dim(), |(r, _)| g[[r, 0]]);
                    acc(&mut grads, need(*a), *a, dx);
                }
                Op::Mse(p, t) => {
                    let (vp, vt) = (val(*p), val(*t));
                    let c = g[[0, 0]] * T::of(2.0 / vp.len() as f64);
                    let dp = Zip::from(&**vp).and(&**vt).map_collect(|&a, &b| (a - b) * c);
                    if need(*t) {
                        acc(&mut grads, true, *t, dp.mapv(|v| -v));
                    }
                    acc(&mut grads, need(*p), *p, dp);
                }
                Op::BceWithLogits(x, labels) => {
                    let vx = val(*x);
                    let c = g[[0, 0]] / T::of(vx.len() as f64);
                    let dx = Zip::from(&**vx)
                        .and(&**labels)
                        .map_collect(|&xv, &y| (sigmoid(xv) - y) * c);
                    acc(&mut grads, need(*x), *x, dx);
                }
            }
        }
        Ok(Gradients { grads })
    }
}
