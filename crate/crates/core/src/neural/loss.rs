use serde::{Deserialize, Serialize};

use crate::error::{OuError, Result};

/// Huber loss: `r²/2` inside `[-δ, δ]`, `δ(|r| - δ/2)` outside.
pub fn huber_loss(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Derivative of [`huber_loss`] with respect to the residual.
pub fn huber_grad(residual: f64, delta: f64) -> f64 {
    residual.clamp(-delta, delta)
}

/// Exponential linear unit.
pub fn elu(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * x.exp_m1()
    }
}

pub fn elu_grad(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        alpha * x.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub delta: f64,
    pub w_theta: f64,
    pub w_sigma_sq: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { delta: 1.0, w_theta: 1.0, w_sigma_sq: 0.5 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(OuError::InvalidConfig(format!("huber delta must be > 0, got {}", self.delta)));
        }
        if !(self.w_theta >= 0.0 && self.w_sigma_sq >= 0.0) || self.w_theta + self.w_sigma_sq == 0.0 {
            return Err(OuError::InvalidConfig("loss weights must be >= 0 and not both zero".into()));
        }
        Ok(())
    }
}

/// `w_θ·L_δ(θ̂ - θ) + w_σ²·L_δ(σ̂² - σ²)`; predictions and targets are `[θ, σ²]`.
pub fn composite_loss(pred: [f64; 2], target: [f64; 2], config: &LossConfig) -> f64 {
    config.w_theta * huber_loss(pred[0] - target[0], config.delta)
        + config.w_sigma_sq * huber_loss(pred[1] - target[1], config.delta)
}

pub fn composite_loss_grad(pred: [f64; 2], target: [f64; 2], config: &LossConfig) -> [f64; 2] {
    [
        config.w_theta * huber_grad(pred[0] - target[0], config.delta),
        config.w_sigma_sq * huber_grad(pred[1] - target[1], config.delta),
    ]
}
