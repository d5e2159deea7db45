use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::params::{Bound, ParamStore};
use super::tape::Gradients;
use super::NnError;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam. Moment buffers are allocated lazily per parameter.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Option<Array2<T>>>,
    v: Vec<Option<Array2<T>>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from gradients on the tape the store was bound to.
    pub fn step(&mut self, store: &mut ParamStore<T>, bound: &Bound, grads: &Gradients<T>) -> Result<(), NnError> {
        let per_param: Vec<Option<&Array2<T>>> = store.ids().map(|id| grads.get(bound[id])).collect();
        self.step_with(store, &per_param)
    }

    /// Applies one update given one optional gradient per parameter, in
    /// registration order. Parameters without a gradient are left untouched.
    pub fn step_with(&mut self, store: &mut ParamStore<T>, grads: &[Option<&Array2<T>>]) -> Result<(), NnError> {
        if grads.len() != store.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        for (id, g) in store.ids().zip(grads) {
            if let Some(g) = g {
                if g.dim() != store.get(id).dim() {
                    return Err(NnError::ShapeMismatch(format!(
                        "gradient shape {:?} for parameter {}",
                        g.shape(),
                        store.params()[id.index()].name
                    )));
                }
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(NnError::Numerical(format!(
                        "non-finite gradient for {}",
                        store.params()[id.index()].name
                    )));
                }
            }
        }
        self.m.resize(store.len(), None);
        self.v.resize(store.len(), None);
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::of(1.0 - c.beta2.powi(self.step as i32));
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));
        let one = T::one();
        for (id, g) in store.ids().zip(grads) {
            let Some(g) = g else { continue };
            let i = id.index();
            let m = self.m[i].get_or_insert_with(|| Array2::zeros(g.dim()));
            let v = self.v[i].get_or_insert_with(|| Array2::zeros(g.dim()));
            Zip::from(&mut *m).and(&mut *v).and(*g).for_each(|m, v, &g| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
            });
            Zip::from(store.get_mut(id)).and(&*m).and(&*v).for_each(|p, &m, &v| {
                let mh = m / bc1;
                let vh = v / bc2;
                *p = *p - lr * mh / (vh.sqrt() + eps);
            });
        }
        Ok(())
    }
}
