use serde::{Deserialize, Serialize};

use super::lstm::Weights;

/// Adam moment-decay constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Weights,
    pub v: Weights,
    pub t: u64,
}

impl AdamState {
    pub fn new(like: &Weights) -> Self {
        Self { m: like.zeros_like(), v: like.zeros_like(), t: 0 }
    }
}

/// Bias-corrected Adam update on flat slices; `t` is the 1-based step count.
pub fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], t: u64, lr: f64, hp: &AdamHyper) {
    assert!(t >= 1, "adam step count starts at 1");
    let bc1 = 1.0 - hp.beta1.powi(t as i32);
    let bc2 = 1.0 - hp.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

/// Advances the step counter and applies one Adam update to every tensor.
pub fn adam_step(params: &mut Weights, grads: &Weights, state: &mut AdamState, lr: f64, hp: &AdamHyper) {
    state.t += 1;
    let t = state.t;
    let grads = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
        adam_update(p, g, m, v, t, lr, hp);
    }
}
