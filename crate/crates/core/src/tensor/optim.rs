//! Parameter updates: plain SGD and AdamW, with per-slot state keyed so the
//! trimmer can discard state when a unit's parameters are released.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimKind {
    #[serde(rename = "sgd")]
    Sgd,
    #[serde(rename = "adamw")]
    AdamW,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OptimHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimHyper {
    fn default() -> Self {
        OptimHyper { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// One updatable parameter as seen by the optimizer.
pub struct ParamRef<'a, S: Scalar> {
    /// Stable identifier used to key optimizer state.
    pub slot: usize,
    pub tensor: &'a mut Tensor<S>,
    pub trainable: bool,
}

struct Moments<S> {
    m: Vec<S>,
    v: Vec<S>,
}

pub struct Optimizer<S: Scalar> {
    kind: OptimKind,
    lr: f64,
    hyper: OptimHyper,
    step_count: u64,
    moments: HashMap<usize, Moments<S>>,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(kind: OptimKind, lr: f64) -> Self {
        Optimizer { kind, lr, hyper: OptimHyper::default(), step_count: 0, moments: HashMap::new() }
    }

    pub fn with_hyper(mut self, hyper: OptimHyper) -> Self {
        self.hyper = hyper;
        self
    }

    pub fn kind(&self) -> OptimKind {
        self.kind
    }

    /// Adjusts the learning rate (for schedules).
    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Applies one update. Trainable parameters must carry gradients; frozen
    /// parameters are left untouched. Gradients are cleared on every
    /// parameter that held one.
    pub fn step<'a, I>(&mut self, params: I) -> Result<()>
    where
        I: IntoIterator<Item = ParamRef<'a, S>>,
    {
        self.step_count += 1;
        let t = self.step_count;
        for p in params {
            if !p.trainable {
                p.tensor.clear_grad();
                continue;
            }
            let n = p.tensor.numel();
            let Some(grad) = p.tensor.grad().map(<[S]>::to_vec) else {
                return Err(Error::State(format!(
                    "optimizer step: trainable parameter slot {} has no gradient",
                    p.slot
                )));
            };
            match self.kind {
                OptimKind::Sgd => {
                    let lr = S::from_f64(self.lr);
                    let data = p.tensor.data_mut();
                    for (w, &g) in data.iter_mut().zip(grad.iter()) {
                        *w -= lr * g;
                    }
                }
                OptimKind::AdamW => {
                    let st = self
                        .moments
                        .entry(p.slot)
                        .or_insert_with(|| Moments { m: vec![S::ZERO; n], v: vec![S::ZERO; n] });
                    let b1 = S::from_f64(self.hyper.beta1);
                    let b2 = S::from_f64(self.hyper.beta2);
                    let one_m_b1 = S::ONE - b1;
                    let one_m_b2 = S::ONE - b2;
                    let bc1 = S::from_f64(1.0 - self.hyper.beta1.powi(t as i32));
                    let bc2 = S::from_f64(1.0 - self.hyper.beta2.powi(t as i32));
                    let lr = S::from_f64(self.lr);
                    let eps = S::from_f64(self.hyper.eps);
                    let wd = S::from_f64(self.hyper.weight_decay);
                    let data = p.tensor.data_mut();
                    for i in 0..n {
                        let g = grad[i];
                        st.m[i] = b1 * st.m[i] + one_m_b1 * g;
                        st.v[i] = b2 * st.v[i] + one_m_b2 * g * g;
                        let mhat = st.m[i] / bc1;
                        let vhat = st.v[i] / bc2;
                        data[i] -= lr * (mhat / (vhat.sqrt() + eps) + wd * data[i]);
                    }
                }
            }
            p.tensor.clear_grad();
        }
        Ok(())
    }

    /// Drops state for released parameter slots.
    pub fn forget(&mut self, slots: impl IntoIterator<Item = usize>) {
        for s in slots {
            self.moments.remove(&s);
        }
    }
}
