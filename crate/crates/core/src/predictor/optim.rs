use serde::{Deserialize, Serialize};

use super::model::{ParamMask, Parameters};
use crate::{Error, Result};

/// `θ ← θ − lr·g` on the entries selected by `mask`.
pub fn sgd_step<P: Parameters>(params: &mut P, grads: &P, lr: f64, mask: ParamMask) -> Result<()> {
    let len = params.values().len();
    if grads.values().len() != len {
        return Err(Error::Dimension(format!(
            "{} gradients for {} parameters",
            grads.values().len(),
            len
        )));
    }
    let head = params.head_range();
    let g = grads.values();
    let values = params.values_mut();
    for r in mask.ranges(len, head) {
        for (v, d) in values[r.clone()].iter_mut().zip(&g[r]) {
            *v -= lr * d;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adamw,
}

/// First-order optimizer state. For SGD the moment vectors stay empty.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerState {
            kind: OptimizerKind::Sgd,
            learning_rate,
            weight_decay: 0.0,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// AdamW with `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
    pub fn adamw(learning_rate: f64, weight_decay: f64, num_params: usize) -> Self {
        OptimizerState {
            kind: OptimizerKind::Adamw,
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Applies one update of whichever kind this state is.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => {
                sgd_step(params, grads, self.learning_rate, ParamMask::All)?;
                self.step += 1;
                Ok(())
            }
            OptimizerKind::Adamw => adamw_step(self, params, grads),
        }
    }
}

/// Decoupled weight decay (`θ ← θ(1 − lr·wd)`) followed by the
/// bias-corrected Adam update.
pub fn adamw_step<P: Parameters>(
    state: &mut OptimizerState,
    params: &mut P,
    grads: &P,
) -> Result<()> {
    if state.kind != OptimizerKind::Adamw {
        return Err(Error::Config(
            "adamw_step on a non-AdamW optimizer state".into(),
        ));
    }
    let len = params.values().len();
    if grads.values().len() != len || state.m.len() != len || state.v.len() != len {
        return Err(Error::Dimension(format!(
            "AdamW state holds {} moments, params {}, grads {}",
            state.m.len(),
            len,
            grads.values().len()
        )));
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powf(t);
    let c2 = 1.0 - b2.powf(t);
    let lr = state.learning_rate;
    let decay = 1.0 - lr * state.weight_decay;
    let values = params.values_mut();
    for (((p, &g), m), v) in values
        .iter_mut()
        .zip(grads.values())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p = *p * decay - lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}
