//! Named parameter storage, initialization and checkpoint archives.
//!
//! Archive layout (text, one record per line):
//!
//! ```text
//! tgrn-params 1
//! <header JSON>
//! param <name> <rows> <cols>
//! <rows*cols values, row-major, space separated>
//! ...
//! ```

use std::collections::HashMap;
use std::ops::Index;

use ndarray::Array2;
use rand::Rng;

use super::tape::{Tape, Var};
use super::NnError;
use crate::scalar::Scalar;
use crate::seed::rng_from;

const ARCHIVE_MAGIC: &str = "tgrn-params";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    Glorot { seed: u64 },
    Zeros,
    Given,
}

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Array2<T>,
    pub init: Init,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, usize>,
}

/// Parameters bound to one tape as differentiable leaves.
pub struct Bound(Vec<Var>);

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    /// Registers a parameter. Each name may be registered once.
    pub fn insert(&mut self, name: &str, value: Array2<T>, init: Init) -> Result<ParamId, NnError> {
        if self.by_name.contains_key(name) {
            return Err(NnError::InvalidConfig(format!("parameter {name} registered twice")));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(NnError::InvalidConfig(format!("bad parameter name {name:?}")));
        }
        self.by_name.insert(name.to_string(), self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            value,
            init,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Uniform Glorot initialization, limit `sqrt(6 / (rows + cols))`.
    pub fn glorot(&mut self, name: &str, rows: usize, cols: usize, seed: u64) -> Result<ParamId, NnError> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let mut rng = rng_from(seed);
        let value = Array2::from_shape_simple_fn((rows, cols), || T::of(rng.gen_range(-limit..limit)));
        self.insert(name, value, Init::Glorot { seed })
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId, NnError> {
        self.insert(name, Array2::zeros((rows, cols)), Init::Zeros)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Array2<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.params[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Result<&Array2<T>, NnError> {
        self.id(name)
            .map(|id| self.get(id))
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn by_name_mut(&mut self, name: &str) -> Result<&mut Array2<T>, NnError> {
        let id = self.id(name).ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        Ok(self.get_mut(id))
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Records every parameter on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &Tape<T>) -> Result<Bound, NnError> {
        self.params
            .iter()
            .map(|p| tape.var(p.value.clone()))
            .collect::<Result<Vec<_>, _>>()
            .map(Bound)
    }

    /// Serializes every parameter with a free-form JSON header.
    pub fn to_archive(&self, header: &serde_json::Value) -> String {
        let mut out = format!("{ARCHIVE_MAGIC} {ARCHIVE_VERSION}\n{header}\n");
        for p in &self.params {
            out.push_str(&format!("param {} {} {}\n", p.name, p.value.nrows(), p.value.ncols()));
            let vals: Vec<String> = p.value.iter().map(|v| v.as_f64().to_string()).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses an archive produced by [`ParamStore::to_archive`].
    pub fn from_archive(text: &str) -> Result<(serde_json::Value, Self), NnError> {
        let bad = |m: String| NnError::Checkpoint(m);
        let mut lines = text.lines();
        let magic = lines.next().unwrap_or("");
        if magic != format!("{ARCHIVE_MAGIC} {ARCHIVE_VERSION}") {
            return Err(bad(format!("unsupported archive header {magic:?}")));
        }
        let header: serde_json::Value = serde_json::from_str(lines.next().unwrap_or(""))
            .map_err(|e| bad(format!("header: {e}")))?;
        let mut store = Self::new();
        while let Some(line) = lines.next() {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 4 || parts[0] != "param" {
                return Err(bad(format!("expected param record, got {line:?}")));
            }
            let rows: usize = parts[2].parse().map_err(|_| bad(format!("rows in {line:?}")))?;
            let cols: usize = parts[3].parse().map_err(|_| bad(format!("cols in {line:?}")))?;
            let body = lines.next().unwrap_or("");
            let vals = body
                .split(' ')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map(T::of))
                .collect::<Result<Vec<T>, _>>()
                .map_err(|e| bad(format!("{}: {e}", parts[1])))?;
            let value = Array2::from_shape_vec((rows, cols), vals)
                .map_err(|_| bad(format!("{}: value count does not match shape", parts[1])))?;
            store.insert(parts[1], value, Init::Given)?;
        }
        Ok((header, store))
    }

    /// Copies values from `other` by name; shapes must match.
    pub fn load_values(&mut self, other: &Self) -> Result<(), NnError> {
        for p in &mut self.params {
            let src = other.by_name(&p.name)?;
            if src.dim() != p.value.dim() {
                return Err(NnError::Checkpoint(format!(
                    "{}: shape {:?} in archive, {:?} in model",
                    p.name,
                    src.shape(),
                    p.value.shape()
                )));
            }
            p.value.assign(src);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::<f64>::new();
        s.zeros("b", 1, 2).unwrap();
        assert!(s.zeros("b", 1, 2).is_err());
    }

    #[test]
    fn glorot_respects_limit_and_seed() {
        let mut a = ParamStore::<f64>::new();
        let mut b = ParamStore::<f64>::new();
        let ia = a.glorot("w", 8, 4, 11).unwrap();
        let ib = b.glorot("w", 8, 4, 11).unwrap();
        assert_eq!(a.get(ia), b.get(ib));
        let lim = (6.0f64 / 12.0).sqrt();
        assert!(a.get(ia).iter().all(|v| v.abs() < lim));
    }

    #[test]
    fn archive_round_trip() {
        let mut s = ParamStore::<f64>::new();
        s.glorot("layer0.w", 3, 2, 5).unwrap();
        s.insert("layer0.b", ndarray::array![[0.1, -1e-300]], Init::Given).unwrap();
        let header = serde_json::json!({"family": "gcn"});
        let text = s.to_archive(&header);
        let (h, back) = ParamStore::<f64>::from_archive(&text).unwrap();
        assert_eq!(h, header);
        for p in s.params() {
            assert_eq!(back.by_name(&p.name).unwrap(), &p.value);
        }
    }
}
