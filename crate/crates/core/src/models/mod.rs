//! Forecasting models: memorization, tabular, static-graph and
//! temporal-graph encoders with link and node decoders.

mod edgebank;

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use edgebank::EdgeBank;

use crate::nn::{
    dropout, Bound, ChebConv, GatConv, GcnConv, GraphGruCell, GraphInput, GruCell, Linear, MatrixGru,
    NnError, ParamStore, Tape, Var,
};
use crate::scalar::Scalar;
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "edgebank")]
    EdgeBank,
    #[serde(rename = "linear")]
    Linear,
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "gcn")]
    Gcn,
    #[serde(rename = "gat")]
    Gat,
    #[serde(rename = "chebnet")]
    ChebNet,
    #[serde(rename = "evolvegcn")]
    EvolveGcn,
    #[serde(rename = "gcrn-gru")]
    GcrnGru,
    #[serde(rename = "roland")]
    Roland,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::EdgeBank,
        Family::Linear,
        Family::Mlp,
        Family::Gcn,
        Family::Gat,
        Family::ChebNet,
        Family::EvolveGcn,
        Family::GcrnGru,
        Family::Roland,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::EdgeBank => "edgebank",
            Family::Linear => "linear",
            Family::Mlp => "mlp",
            Family::Gcn => "gcn",
            Family::Gat => "gat",
            Family::ChebNet => "chebnet",
            Family::EvolveGcn => "evolvegcn",
            Family::GcrnGru => "gcrn-gru",
            Family::Roland => "roland",
        }
    }

    /// Families whose embeddings depend on earlier snapshots.
    pub fn is_temporal(self) -> bool {
        matches!(self, Family::EvolveGcn | Family::GcrnGru | Family::Roland)
    }

    pub fn is_learned(self) -> bool {
        self != Family::EdgeBank
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, NnError> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| NnError::InvalidConfig(format!("unknown model family {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    Dot,
    Mlp,
}

/// Architecture hyperparameters shared by every learned family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub cheb_k: usize,
    pub heads: usize,
    pub dropout: f64,
    pub decoder: DecoderKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            layers: 2,
            cheb_k: 3,
            heads: 4,
            dropout: 0.1,
            decoder: DecoderKind::Dot,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, family: Family) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if self.hidden == 0 || self.layers == 0 || self.cheb_k == 0 || self.heads == 0 {
            return bad("hidden, layers, cheb_k and heads must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if family == Family::Gat && !self.hidden.is_multiple_of(self.heads) {
            return bad(format!(
                "gat hidden {} not divisible by heads {}",
                self.hidden, self.heads
            ));
        }
        Ok(())
    }
}

/// Which prediction the model's head produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Link,
    Node,
}

#[derive(Clone, Debug)]
enum Encoder {
    Linear(Linear),
    Mlp(Vec<Linear>),
    Gcn(Vec<GcnConv>),
    Gat(Vec<GatConv>),
    Cheb(Vec<ChebConv>),
    GcrnGru(Vec<GraphGruCell>),
    Roland { convs: Vec<ChebConv>, cells: Vec<GruCell> },
    EvolveGcn { convs: Vec<GcnConv>, evolvers: Vec<MatrixGru> },
}

#[derive(Clone, Debug)]
enum Head {
    Dot,
    MlpLink(Linear, Linear),
    Node(Linear),
}

/// Recurrent state carried between snapshots: one node-state matrix per
/// layer (gcrn-gru, roland) or one weight matrix per layer (evolvegcn).
/// Empty before the first snapshot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelState<T> {
    pub layers: Vec<Array2<T>>,
    pub step: usize,
}

impl<T: Scalar> ModelState<T> {
    pub fn initial() -> Self {
        Self {
            layers: Vec::new(),
            step: 0,
        }
    }
}

/// Output of one encoder pass.
pub struct Encoded {
    pub h: Var,
    pub next_state: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    family: Family,
    config: ModelConfig,
    d_in: usize,
    head_kind: HeadKind,
    store: ParamStore<T>,
    encoder: Encoder,
    head: Head,
}

impl<T: Scalar> Model<T> {
    pub fn new(
        family: Family,
        config: &ModelConfig,
        head_kind: HeadKind,
        d_in: usize,
        seed: u64,
    ) -> Result<Self, NnError> {
        config.validate(family)?;
        if d_in == 0 {
            return Err(NnError::InvalidConfig("input width must be >= 1".into()));
        }
        let mut store = ParamStore::new();
        let h = config.hidden;
        let layers = config.layers;
        let k = config.cheb_k;
        let width = |l: usize| if l == 0 { d_in } else { h };
        let encoder = match family {
            Family::EdgeBank => {
                return Err(NnError::InvalidConfig("edgebank has no learned encoder".into()))
            }
            Family::Linear => Encoder::Linear(Linear::new(&mut store, "enc", d_in, h, true, seed)?),
            Family::Mlp => Encoder::Mlp(
                (0..layers)
                    .map(|l| Linear::new(&mut store, &format!("enc{l}"), width(l), h, true, seed))
                    .collect::<Result<_, _>>()?,
            ),
            Family::Gcn => Encoder::Gcn(
                (0..layers)
                    .map(|l| GcnConv::new(&mut store, &format!("gcn{l}"), width(l), h, seed))
                    .collect::<Result<_, _>>()?,
            ),
            Family::Gat => Encoder::Gat(
                (0..layers)
                    .map(|l| GatConv::new(&mut store, &format!("gat{l}"), width(l), h, config.heads, seed))
                    .collect::<Result<_, _>>()?,
            ),
            Family::ChebNet => Encoder::Cheb(
                (0..layers)
                    .map(|l| ChebConv::new(&mut store, &format!("cheb{l}"), width(l), h, k, true, seed))
                    .collect::<Result<_, _>>()?,
            ),
            Family::GcrnGru => Encoder::GcrnGru(
                (0..layers)
                    .map(|l| GraphGruCell::new(&mut store, &format!("ggru{l}"), width(l), h, k, seed))
                    .collect::<Result<_, _>>()?,
            ),
            Family::Roland => {
                let mut convs = Vec::with_capacity(layers);
                let mut cells = Vec::with_capacity(layers);
                for l in 0..layers {
                    convs.push(ChebConv::new(&mut store, &format!("cheb{l}"), width(l), h, k, true, seed)?);
                    cells.push(GruCell::new(&mut store, &format!("gru{l}"), h, h, seed)?);
                }
                Encoder::Roland { convs, cells }
            }
            Family::EvolveGcn => {
                let mut convs = Vec::with_capacity(layers);
                let mut evolvers = Vec::with_capacity(layers);
                for l in 0..layers {
                    convs.push(GcnConv::new(&mut store, &format!("gcn{l}"), width(l), h, seed)?);
                    evolvers.push(MatrixGru::new(&mut store, &format!("evolve{l}"), width(l), h, seed)?);
                }
                Encoder::EvolveGcn { convs, evolvers }
            }
        };
        let head_seed = derive_seed(seed, "head");
        let head = match (head_kind, config.decoder) {
            (HeadKind::Link, DecoderKind::Dot) => Head::Dot,
            (HeadKind::Link, DecoderKind::Mlp) => Head::MlpLink(
                Linear::new(&mut store, "dec0", 2 * h, h, true, head_seed)?,
                Linear::new(&mut store, "dec1", h, 1, true, head_seed)?,
            ),
            (HeadKind::Node, _) => Head::Node(Linear::new(&mut store, "node_head", h, 1, true, head_seed)?),
        };
        Ok(Self {
            family,
            config: config.clone(),
            d_in,
            head_kind,
            store,
            encoder,
            head,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.d_in
    }

    pub fn head_kind(&self) -> HeadKind {
        self.head_kind
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn maybe_dropout<R: Rng>(&self, tape: &Tape<T>, x: Var, rng: &mut Option<&mut R>) -> Result<Var, NnError> {
        match rng {
            Some(r) => dropout(tape, x, self.config.dropout, *r),
            None => Ok(x),
        }
    }

    fn state_var(
        &self,
        tape: &Tape<T>,
        state: &ModelState<T>,
        l: usize,
        rows: usize,
        cols: usize,
    ) -> Result<Var, NnError> {
        match state.layers.get(l) {
            Some(s) if s.dim() == (rows, cols) => tape.constant(s.clone()),
            Some(s) => Err(NnError::ShapeMismatch(format!(
                "recurrent state for layer {l} is {:?}, expected {:?}",
                s.shape(),
                [rows, cols]
            ))),
            None if state.layers.is_empty() => tape.constant(Array2::zeros((rows, cols))),
            None => Err(NnError::ShapeMismatch(format!("recurrent state lacks layer {l}"))),
        }
    }

    /// Node embeddings for one snapshot given the state left by the previous
    /// one. The returned `next_state` holds the updated recurrent values;
    /// gradients do not flow into `state`. Passing `rng` enables dropout.
    pub fn encode<R: Rng>(
        &self,
        tape: &Tape<T>,
        p: &Bound,
        g: &GraphInput<T>,
        x: Var,
        state: &ModelState<T>,
        mut rng: Option<&mut R>,
    ) -> Result<Encoded, NnError> {
        let (n, d) = tape.shape(x);
        if d != self.d_in || n != g.n {
            return Err(NnError::ShapeMismatch(format!(
                "features {:?} for a {}-node graph with input width {}",
                [n, d],
                g.n,
                self.d_in
            )));
        }
        let h = self.config.hidden;
        let mut next_state = Vec::new();
        let mut cur = x;
        let out = match &self.encoder {
            Encoder::Linear(lin) => lin.forward(tape, p, x)?,
            Encoder::Mlp(layers) => {
                for (l, lin) in layers.iter().enumerate() {
                    if l > 0 {
                        cur = tape.relu(cur)?;
                        cur = self.maybe_dropout(tape, cur, &mut rng)?;
                    }
                    cur = lin.forward(tape, p, cur)?;
                }
                cur
            }
            Encoder::Gcn(convs) => {
                for (l, c) in convs.iter().enumerate() {
                    if l > 0 {
                        cur = tape.relu(cur)?;
                        cur = self.maybe_dropout(tape, cur, &mut rng)?;
                    }
                    cur = c.forward(tape, p, g, cur)?;
                }
                cur
            }
            Encoder::Gat(convs) => {
                for (l, c) in convs.iter().enumerate() {
                    if l > 0 {
                        cur = tape.relu(cur)?;
                        cur = self.maybe_dropout(tape, cur, &mut rng)?;
                    }
                    cur = c.forward(tape, p, g, cur)?;
                }
                cur
            }
            Encoder::Cheb(convs) => {
                for (l, c) in convs.iter().enumerate() {
                    if l > 0 {
                        cur = tape.relu(cur)?;
                        cur = self.maybe_dropout(tape, cur, &mut rng)?;
                    }
                    cur = c.forward(tape, p, g, cur)?;
                }
                cur
            }
            Encoder::GcrnGru(cells) => {
                for (l, cell) in cells.iter().enumerate() {
                    if l > 0 {
                        cur = self.maybe_dropout(tape, cur, &mut rng)?;
                    }
                    let prev = self.state_var(tape, state, l, n, h)?;
                    cur = cell.forward(tape, p, g, cur, prev)?;
                    next_state.push(cur);
                }
                cur
            }
            Encoder::Roland { convs, cells } => {
                for (l, (conv, cell)) in convs.iter().zip(cells).enumerate() {
                    if l > 0 {
                        cur = self.maybe_dropout(tape, cur, &mut rng)?;
                    }
                    let msg = conv.forward(tape, p, g, cur)?;
                    let msg = tape.relu(msg)?;
                    let prev = self.state_var(tape, state, l, n, h)?;
                    cur = cell.forward(tape, p, msg, prev)?;
                    next_state.push(cur);
                }
                cur
            }
            Encoder::EvolveGcn { convs, evolvers } => {
                for (l, (conv, evo)) in convs.iter().zip(evolvers).enumerate() {
                    if l > 0 {
                        cur = tape.relu(cur)?;
                        cur = self.maybe_dropout(tape, cur, &mut rng)?;
                    }
                    let w_prev = match state.layers.get(l) {
                        Some(w) => {
                            let want = self.store.get(conv.lin.w).dim();
                            if w.dim() != want {
                                return Err(NnError::ShapeMismatch(format!(
                                    "evolving weight for layer {l} is {:?}",
                                    w.shape()
                                )));
                            }
                            tape.constant(w.clone())?
                        }
                        None if state.layers.is_empty() => p[conv.lin.w],
                        None => {
                            return Err(NnError::ShapeMismatch(format!(
                                "recurrent state lacks layer {l}"
                            )))
                        }
                    };
                    let w = evo.forward(tape, p, w_prev)?;
                    next_state.push(w);
                    cur = conv.forward_with(tape, p, g, cur, w)?;
                }
                cur
            }
        };
        Ok(Encoded { h: out, next_state })
    }

    /// Link logits for `(src[m], dst[m])` pairs, `m × 1`.
    pub fn decode_link(
        &self,
        tape: &Tape<T>,
        p: &Bound,
        h: Var,
        src: &Rc<Vec<usize>>,
        dst: &Rc<Vec<usize>>,
    ) -> Result<Var, NnError> {
        if src.len() != dst.len() {
            return Err(NnError::ShapeMismatch("pair lists differ in length".into()));
        }
        let hs = tape.gather_rows(h, src)?;
        let hd = tape.gather_rows(h, dst)?;
        match &self.head {
            Head::Dot => {
                let prod = tape.mul(hs, hd)?;
                tape.row_sum(prod)
            }
            Head::MlpLink(l0, l1) => {
                let cat = tape.concat_cols(&[hs, hd])?;
                let z = tape.relu(l0.forward(tape, p, cat)?)?;
                l1.forward(tape, p, z)
            }
            Head::Node(_) => Err(NnError::InvalidConfig("model has a node head".into())),
        }
    }

    /// Per-node regression output, `n × 1`.
    pub fn decode_node(&self, tape: &Tape<T>, p: &Bound, h: Var) -> Result<Var, NnError> {
        match &self.head {
            Head::Node(lin) => lin.forward(tape, p, h),
            _ => Err(NnError::InvalidConfig("model has a link head".into())),
        }
    }

    /// State after a pass, read off the tape.
    pub fn state_after(&self, tape: &Tape<T>, enc: &Encoded, prev: &ModelState<T>) -> ModelState<T> {
        ModelState {
            layers: enc.next_state.iter().map(|&v| (*tape.value(v)).clone()).collect(),
            step: prev.step + 1,
        }
    }

    /// Inference-mode embeddings and the following state.
    pub fn embed(
        &self,
        g: &GraphInput<T>,
        x: &Array2<T>,
        state: &ModelState<T>,
    ) -> Result<(Array2<T>, ModelState<T>), NnError> {
        let tape = Tape::new();
        let p = self.store.bind(&tape)?;
        let xv = tape.constant(x.clone())?;
        let enc = self.encode::<rand_chacha::ChaCha8Rng>(&tape, &p, g, xv, state, None)?;
        let h = (*tape.value(enc.h)).clone();
        Ok((h, self.state_after(&tape, &enc, state)))
    }

    /// Link logits for a batch of pairs in inference mode.
    pub fn predict_links(
        &self,
        g: &GraphInput<T>,
        x: &Array2<T>,
        state: &ModelState<T>,
        pairs: &[(usize, usize)],
    ) -> Result<Vec<T>, NnError> {
        let tape = Tape::new();
        let p = self.store.bind(&tape)?;
        let xv = tape.constant(x.clone())?;
        let enc = self.encode::<rand_chacha::ChaCha8Rng>(&tape, &p, g, xv, state, None)?;
        let src = Rc::new(pairs.iter().map(|q| q.0).collect());
        let dst = Rc::new(pairs.iter().map(|q| q.1).collect());
        let logits = self.decode_link(&tape, &p, enc.h, &src, &dst)?;
        Ok(tape.value(logits).iter().copied().collect())
    }

    /// Node regression outputs in inference mode.
    pub fn predict_nodes(
        &self,
        g: &GraphInput<T>,
        x: &Array2<T>,
        state: &ModelState<T>,
    ) -> Result<Vec<T>, NnError> {
        let tape = Tape::new();
        let p = self.store.bind(&tape)?;
        let xv = tape.constant(x.clone())?;
        let enc = self.encode::<rand_chacha::ChaCha8Rng>(&tape, &p, g, xv, state, None)?;
        let out = self.decode_node(&tape, &p, enc.h)?;
        Ok(tape.value(out).iter().copied().collect())
    }

    /// Parameter archive with family and configuration in the header.
    pub fn to_checkpoint(&self) -> String {
        let header = serde_json::json!({
            "family": self.family.name(),
            "config": self.config,
            "input_dim": self.d_in,
            "head": match self.head_kind { HeadKind::Link => "link", HeadKind::Node => "node" },
        });
        self.store.to_archive(&header)
    }

    /// Loads parameter values from an archive written by a model of the same
    /// family and configuration.
    pub fn load_checkpoint(&mut self, text: &str) -> Result<(), NnError> {
        let (header, store) = ParamStore::<T>::from_archive(text)?;
        if header.get("family").and_then(|f| f.as_str()) != Some(self.family.name()) {
            return Err(NnError::Checkpoint(format!(
                "checkpoint family {} does not match {}",
                header.get("family").unwrap_or(&serde_json::Value::Null),
                self.family
            )));
        }
        self.store.load_values(&store)
    }
}
