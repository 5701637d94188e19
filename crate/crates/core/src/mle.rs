//! Exact maximum-likelihood estimation of `(θ, σ²)` from a discretely
//! observed path.
//!
//! The pipeline has three stages: a moment-based starting point, a BFGS
//! descent of the negative log-likelihood in `(ln θ, ln σ²)`, and a
//! basin-hopping search that only runs when the local descent looks
//! unreliable.
//!
//! The log-likelihood is the standard Gaussian one, with both the `log 2π`
//! term and the quadratic term entering negatively:
//!
//! ```text
//! ℓ(θ, σ²) = -n/2 · log(2π) - 1/2 Σ log V(Δt) - 1/2 Σ (X_i - X_{i-1} e^{-θΔt})² / V(Δt)
//! ```
//!
//! Some printed forms of this expression carry a `+n/2 · log(2π)` and drop
//! the minus sign inside the exponent; those are typos and are not followed
//! here.

use std::time::Instant;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OuError, Result};
use crate::optimizer::{basin_hop, bfgs_minimize, norm, BfgsOptions, HopConfig, Objective, TraceRow};
use crate::process::{gaussian_transition_log_density, OUParams, Trajectory};
use crate::rng::derive_seed;

pub const RHO_MIN: f64 = 1e-4;
pub const RHO_MAX: f64 = 0.999;
pub const THETA_FLOOR: f64 = 0.5;

/// Moment-based starting point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmEstimate {
    pub theta_hat: f64,
    pub sigma_sq_hat: f64,
    pub rho_hat: f64,
    /// The lag-1 correlation was outside `[1e-4, 0.999]`.
    pub rho_clamped: bool,
    /// `-ln(ρ)/Δt` fell below the floor of 0.5.
    pub theta_floored: bool,
}

impl GmmEstimate {
    pub fn clamp_applied(&self) -> bool {
        self.rho_clamped || self.theta_floored
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance (divides by `N`).
pub fn population_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Lag-1 correlation, clamp, `θ = max(-ln ρ / Δt, 0.5)`, `σ² = 2θ·Var(X)`.
pub fn gmm_initialize(trajectory: &Trajectory) -> Result<GmmEstimate> {
    let x = trajectory.values();
    if x.len() < 3 {
        return Err(OuError::TooShort { needed: 3, got: x.len() });
    }
    let (a, b) = (&x[..x.len() - 1], &x[1..]);
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (u, v) in a.iter().zip(b) {
        let (du, dv) = (u - ma, v - mb);
        sab += du * dv;
        saa += du * du;
        sbb += dv * dv;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(OuError::ConstantSeries);
    }
    let raw_rho = sab / (saa * sbb).sqrt();
    let rho_hat = raw_rho.clamp(RHO_MIN, RHO_MAX);
    let raw_theta = -rho_hat.ln() / trajectory.dt();
    let theta_hat = raw_theta.max(THETA_FLOOR);
    Ok(GmmEstimate {
        theta_hat,
        sigma_sq_hat: 2.0 * theta_hat * population_variance(x),
        rho_hat,
        rho_clamped: rho_hat != raw_rho,
        theta_floored: theta_hat != raw_theta,
    })
}

/// Exact log-likelihood: the sum of Gaussian transition log-densities over
/// consecutive observations.
pub fn log_likelihood(params: &OUParams, trajectory: &Trajectory) -> f64 {
    let (theta, sigma_sq, dt) = (params.theta(), params.sigma_sq(), trajectory.dt());
    trajectory.transitions().map(|(prev, x)| gaussian_transition_log_density(theta, sigma_sq, prev, x, dt)).sum()
}

/// Analytic `(∂ℓ/∂θ, ∂ℓ/∂σ²)`.
pub fn log_likelihood_gradient(params: &OUParams, trajectory: &Trajectory) -> (f64, f64) {
    let mut ws = LikelihoodWorkspace::new(trajectory.clone());
    let (_, g) = ws.evaluate(params.theta(), params.sigma_sq());
    g
}

/// `σ²` maximizing the likelihood for a fixed `θ`: `Σ r² / (n · q(θ))` with
/// `V = σ² q(θ)`.
pub fn profile_sigma_sq(theta: f64, trajectory: &Trajectory) -> f64 {
    let dt = trajectory.dt();
    let decay = (-theta * dt).exp();
    let q = -(-2.0 * theta * dt).exp_m1() / (2.0 * theta);
    let n = (trajectory.len() - 1) as f64;
    let ss: f64 = trajectory.transitions().map(|(p, x)| (x - decay * p).powi(2)).sum();
    ss / (n * q)
}

/// Evaluation buffers for repeated likelihood calls on one path.
#[derive(Debug, Clone)]
pub struct LikelihoodWorkspace {
    trajectory: Trajectory,
    residuals: Vec<f64>,
}

impl LikelihoodWorkspace {
    pub fn new(trajectory: Trajectory) -> Self {
        let n = trajectory.len() - 1;
        Self { trajectory, residuals: vec![0.0; n] }
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn n_transitions(&self) -> usize {
        self.residuals.len()
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Log-likelihood and its gradient in `(θ, σ²)`.
    pub fn evaluate(&mut self, theta: f64, sigma_sq: f64) -> (f64, (f64, f64)) {
        let dt = self.trajectory.dt();
        let x = self.trajectory.values();
        let n = self.residuals.len() as f64;
        let decay = (-theta * dt).exp();
        let e2 = (-2.0 * theta * dt).exp();
        let q = -(-2.0 * theta * dt).exp_m1() / (2.0 * theta);
        let v = sigma_sq * q;

        let mut ss = 0.0;
        let mut rx = 0.0;
        for (i, r) in self.residuals.iter_mut().enumerate() {
            *r = x[i + 1] - decay * x[i];
            ss += *r * *r;
            rx += *r * x[i];
        }
        let ll = -0.5 * n * (2.0 * std::f64::consts::PI * v).ln() - ss / (2.0 * v);

        let dq = (dt * e2 - q) / theta;
        let dv = sigma_sq * dq;
        let d_theta = dv / (2.0 * v) * (ss / v - n) - dt * decay * rx / v;
        let d_sigma_sq = (ss / v - n) / (2.0 * sigma_sq);
        (ll, (d_theta, d_sigma_sq))
    }
}

/// Mean negative log-likelihood per transition as a function of
/// `u = (ln θ, ln σ²)`.
pub struct NegLogLikObjective {
    workspace: std::cell::RefCell<LikelihoodWorkspace>,
}

impl NegLogLikObjective {
    pub fn new(trajectory: Trajectory) -> Self {
        Self { workspace: std::cell::RefCell::new(LikelihoodWorkspace::new(trajectory)) }
    }

    pub fn to_params(u: &[f64]) -> Result<OUParams> {
        OUParams::new(u[0].exp(), u[1].exp())
    }
}

impl Objective for NegLogLikObjective {
    fn dimension(&self) -> usize {
        2
    }

    fn evaluate(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let (theta, sigma_sq) = (u[0].exp(), u[1].exp());
        if !(theta > 0.0 && theta.is_finite() && sigma_sq > 0.0 && sigma_sq.is_finite()) {
            return (f64::INFINITY, vec![f64::NAN; 2]);
        }
        let mut ws = self.workspace.borrow_mut();
        let n = ws.n_transitions() as f64;
        let (ll, (gt, gs)) = ws.evaluate(theta, sigma_sq);
        let value = -ll / n;
        if !value.is_finite() {
            return (f64::INFINITY, vec![f64::NAN; 2]);
        }
        (value, vec![-gt * theta / n, -gs * sigma_sq / n])
    }
}

/// Rule deciding whether the basin-hopping stage runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum NonconvexityTrigger {
    /// Run when BFGS did not converge, its terminal gradient norm exceeds
    /// `grad_threshold`, or it ended above the starting value.
    Auto {
        grad_threshold: f64,
    },
    Always,
    Never,
}

impl Default for NonconvexityTrigger {
    fn default() -> Self {
        Self::Auto { grad_threshold: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MleConfig {
    pub grad_tolerance: f64,
    pub max_bfgs_iters: usize,
    /// Zero disables stage III.
    pub basin_hops: usize,
    /// Perturbation half-width in `(ln θ, ln σ²)`.
    pub hop_scale: f64,
    pub hop_temperature: f64,
    pub nonconvexity_trigger: NonconvexityTrigger,
    pub seed: u64,
    #[serde(skip)]
    pub trace: bool,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            grad_tolerance: 1e-6,
            max_bfgs_iters: 200,
            basin_hops: 50,
            hop_scale: 0.5,
            hop_temperature: 1.0,
            nonconvexity_trigger: NonconvexityTrigger::default(),
            seed: 0,
            trace: false,
        }
    }
}

impl MleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tolerance > 0.0) {
            return Err(OuError::InvalidConfig("grad_tolerance must be > 0".into()));
        }
        if !(self.hop_scale > 0.0) || !(self.hop_temperature > 0.0) {
            return Err(OuError::InvalidConfig("hop_scale and hop_temperature must be > 0".into()));
        }
        if let NonconvexityTrigger::Auto { grad_threshold } = self.nonconvexity_trigger {
            if !(grad_threshold > 0.0) {
                return Err(OuError::InvalidConfig("grad_threshold must be > 0".into()));
            }
        }
        Ok(())
    }

    fn bfgs_options(&self) -> BfgsOptions {
        BfgsOptions { tolerance: self.grad_tolerance, max_iters: self.max_bfgs_iters, h0: None, trace: self.trace }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Gmm,
    Bfgs,
    Basinhop,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Gmm => "gmm",
            Stage::Bfgs => "bfgs",
            Stage::Basinhop => "basinhop",
        })
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub params_hat: OUParams,
    pub log_likelihood: f64,
    pub converged: bool,
    pub stage_reached: Stage,
    pub iterations: usize,
    pub wall_time: f64,
    pub start: GmmEstimate,
    /// Gradient norm of the mean negative log-likelihood in log-parameters at
    /// the returned point.
    pub grad_norm: f64,
    pub trace: Vec<TraceRow>,
}

/// Per-path JSON fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub theta_hat: f64,
    pub sigma_sq_hat: f64,
    pub loglik: f64,
    pub converged: bool,
    pub stage: Stage,
    pub iters: usize,
    pub wall_time_s: f64,
}

impl From<&EstimationResult> for FitReport {
    fn from(r: &EstimationResult) -> Self {
        Self {
            theta_hat: r.params_hat.theta(),
            sigma_sq_hat: r.params_hat.sigma_sq(),
            loglik: r.log_likelihood,
            converged: r.converged,
            stage: r.stage_reached,
            iters: r.iterations,
            wall_time_s: r.wall_time,
        }
    }
}

fn starting_point(trajectory: &Trajectory) -> Result<GmmEstimate> {
    match gmm_initialize(trajectory) {
        Err(OuError::ConstantSeries) => {
            let var = population_variance(trajectory.values());
            if var > 0.0 {
                debug!("GMM undefined on this path; starting from (0.5, Var(X))");
                Ok(GmmEstimate {
                    theta_hat: THETA_FLOOR,
                    sigma_sq_hat: var,
                    rho_hat: f64::NAN,
                    rho_clamped: false,
                    theta_floored: false,
                })
            } else {
                Err(OuError::ConstantSeries)
            }
        }
        other => other,
    }
}

/// Three-stage MLE: moments → BFGS → (conditionally) basin hopping.
pub fn fit_mle(trajectory: &Trajectory, config: &MleConfig) -> Result<EstimationResult> {
    config.validate()?;
    let clock = Instant::now();
    let start = starting_point(trajectory)?;
    let objective = NegLogLikObjective::new(trajectory.clone());
    let u0 = [start.theta_hat.ln(), start.sigma_sq_hat.ln()];
    let (f0, g0) = objective.evaluate(&u0);

    let mut best_u = u0.to_vec();
    let mut best_f = f0;
    let mut best_g = g0;
    let mut stage = Stage::Gmm;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut run_hops = false;

    if config.max_bfgs_iters > 0 {
        stage = Stage::Bfgs;
        match bfgs_minimize(&objective, &u0, &config.bfgs_options()) {
            Ok(res) => {
                iterations += res.iterations;
                let grad_norm = res.grad_norm();
                run_hops = match config.nonconvexity_trigger {
                    NonconvexityTrigger::Always => true,
                    NonconvexityTrigger::Never => false,
                    NonconvexityTrigger::Auto { grad_threshold } => {
                        !res.converged || grad_norm > grad_threshold || !(res.value <= f0)
                    }
                };
                if res.value < best_f || !best_f.is_finite() {
                    best_f = res.value;
                    best_u = res.x;
                    best_g = res.gradient;
                }
                trace = res.trace;
            }
            Err(e) => {
                debug!("BFGS could not start: {e}");
                run_hops = !matches!(config.nonconvexity_trigger, NonconvexityTrigger::Never);
            }
        }
    }

    if run_hops && config.basin_hops > 0 && best_f.is_finite() {
        stage = Stage::Basinhop;
        let hop = HopConfig {
            n_hops: config.basin_hops,
            step_scale: config.hop_scale,
            temperature: config.hop_temperature,
            seed: config.seed,
        };
        let local = BfgsOptions { trace: false, ..config.bfgs_options() };
        match basin_hop(&objective, &best_u, &hop, &local) {
            Ok(res) => {
                iterations += res.bfgs_iterations;
                if res.value < best_f {
                    best_f = res.value;
                    best_g = objective.evaluate(&res.x).1;
                    best_u = res.x;
                }
            }
            Err(e) => debug!("basin hopping failed: {e}"),
        }
    }

    if !best_f.is_finite() {
        return Err(OuError::OptimizationFailed("no stage produced a finite likelihood".into()));
    }
    let params_hat = NegLogLikObjective::to_params(&best_u)
        .map_err(|e| OuError::OptimizationFailed(format!("optimum left the parameter domain: {e}")))?;
    let grad_norm = norm(&best_g);
    let wall_time = clock.elapsed().as_secs_f64();
    Ok(EstimationResult {
        params_hat,
        log_likelihood: log_likelihood(&params_hat, trajectory),
        converged: grad_norm < config.grad_tolerance,
        stage_reached: stage,
        iterations,
        wall_time,
        start,
        grad_norm,
        trace,
    })
}

/// Fits every path independently. Path `i` uses basin-hopping seed
/// `derive_seed(config.seed, 0x4d4c45, i)`; results are in input order.
pub fn fit_mle_batch(trajectories: &[Trajectory], config: &MleConfig) -> Vec<Result<EstimationResult>> {
    trajectories
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let cfg = MleConfig { seed: derive_seed(config.seed, 0x4d4c45, i as u64), ..config.clone() };
            fit_mle(t, &cfg)
        })
        .collect()
}
