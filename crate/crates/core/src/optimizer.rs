//! Unconstrained minimization: strong-Wolfe line search, dense BFGS and a
//! basin-hopping wrapper.

use log::debug;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OuError, Result};
use crate::rng::stream;

/// A differentiable objective `f: R^d -> R`.
pub trait Objective {
    fn dimension(&self) -> usize;

    /// Returns `(f(x), ∇f(x))`. A non-finite value marks `x` infeasible.
    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>);
}

/// Adapts a closure returning `(value, gradient)` into an [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    fn dimension(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.f)(x)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], alpha: f64, p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(xi, pi)| xi + alpha * pi).collect()
}

pub const WOLFE_C1: f64 = 1e-4;
pub const WOLFE_C2: f64 = 0.9;
pub const LINE_SEARCH_MAX_ITERS: usize = 50;
const ALPHA_MAX: f64 = 1e10;

/// Accepted step and the objective state at `x + αp`.
#[derive(Debug, Clone)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub evaluations: usize,
}

#[derive(Clone, Copy)]
struct Probe {
    alpha: f64,
    phi: f64,
    dphi: f64,
}

struct LineProblem<'a, O: Objective + ?Sized> {
    objective: &'a O,
    x: &'a [f64],
    p: &'a [f64],
    evaluations: usize,
}

impl<O: Objective + ?Sized> LineProblem<'_, O> {
    fn probe(&mut self, alpha: f64) -> (Probe, Vec<f64>) {
        self.evaluations += 1;
        let (f, g) = self.objective.evaluate(&axpy(self.x, alpha, self.p));
        let phi = if f.is_finite() { f } else { f64::INFINITY };
        let dphi = if phi.is_finite() { dot(&g, self.p) } else { f64::NAN };
        (Probe { alpha, phi, dphi }, g)
    }
}

/// Minimizer of the cubic matching values and slopes at `a` and `b`, or
/// `None` when the data does not define a usable cubic.
fn cubic_min(a: Probe, b: Probe) -> Option<f64> {
    if !(a.phi.is_finite() && b.phi.is_finite() && a.dphi.is_finite() && b.dphi.is_finite()) {
        return None;
    }
    let d1 = a.dphi + b.dphi - 3.0 * (a.phi - b.phi) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.dphi * b.dphi;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let denom = b.dphi - a.dphi + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let t = b.alpha - (b.alpha - a.alpha) * (b.dphi + d2 - d1) / denom;
    t.is_finite().then_some(t)
}

/// Strong-Wolfe line search (bracketing then zoom with cubic interpolation),
/// followed by one secant refinement on the directional derivative. The
/// refinement is kept only if it also satisfies strong Wolfe and does not
/// raise the value; on a quadratic it lands on the exact line minimum.
pub fn line_search<O: Objective + ?Sized>(objective: &O, x: &[f64], p: &[f64]) -> Result<LineSearchResult> {
    let (f0, g0) = objective.evaluate(x);
    line_search_from(objective, x, p, f0, &g0)
}

pub(crate) fn line_search_from<O: Objective + ?Sized>(
    objective: &O,
    x: &[f64],
    p: &[f64],
    f0: f64,
    g0: &[f64],
) -> Result<LineSearchResult> {
    let dphi0 = dot(g0, p);
    if !(dphi0 < 0.0) {
        return Err(OuError::NotDescent(dphi0));
    }
    let mut lp = LineProblem { objective, x, p, evaluations: 0 };
    let origin = Probe { alpha: 0.0, phi: f0, dphi: dphi0 };
    let armijo = |pr: &Probe| pr.phi <= f0 + WOLFE_C1 * pr.alpha * dphi0;
    let curvature = |pr: &Probe| pr.dphi.abs() <= -WOLFE_C2 * dphi0;

    let mut accepted: Option<(Probe, Vec<f64>)> = None;
    let mut prev = origin;
    let mut alpha = 1.0;
    let mut iters = 0;
    let mut bracket: Option<(Probe, Probe)> = None;

    while iters < LINE_SEARCH_MAX_ITERS {
        iters += 1;
        let (cur, g) = lp.probe(alpha);
        if !armijo(&cur) || (prev.alpha > 0.0 && cur.phi >= prev.phi) {
            bracket = Some((prev, cur));
            break;
        }
        if curvature(&cur) {
            accepted = Some((cur, g));
            break;
        }
        if cur.dphi >= 0.0 {
            bracket = Some((cur, prev));
            break;
        }
        prev = cur;
        alpha = (2.0 * alpha).min(ALPHA_MAX);
    }

    if accepted.is_none() {
        let (mut lo, mut hi) = bracket.ok_or(OuError::LineSearchFailed(iters))?;
        while iters < LINE_SEARCH_MAX_ITERS {
            iters += 1;
            let (left, right) = if lo.alpha < hi.alpha { (lo.alpha, hi.alpha) } else { (hi.alpha, lo.alpha) };
            let width = right - left;
            if !(width > f64::EPSILON * right.max(1e-300)) {
                break;
            }
            let trial = cubic_min(lo, hi)
                .filter(|t| *t > left + 0.1 * width && *t < right - 0.1 * width)
                .unwrap_or(0.5 * (left + right));
            let (cur, g) = lp.probe(trial);
            if !armijo(&cur) || cur.phi >= lo.phi {
                hi = cur;
            } else {
                if curvature(&cur) {
                    accepted = Some((cur, g));
                    break;
                }
                if cur.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
    }

    let (mut best, mut best_g) = accepted.ok_or(OuError::LineSearchFailed(iters))?;

    // Secant step on φ'(α) through (0, φ'(0)) and (α, φ'(α)).
    let denom = dphi0 - best.dphi;
    if denom != 0.0 && best.dphi != 0.0 {
        let secant = best.alpha * dphi0 / denom;
        if secant.is_finite() && secant > 0.0 && (secant - best.alpha).abs() > 1e-12 * best.alpha {
            let (cand, g) = lp.probe(secant);
            if armijo(&cand) && curvature(&cand) && cand.phi <= best.phi {
                best = cand;
                best_g = g;
            }
        }
    }

    Ok(LineSearchResult { alpha: best.alpha, value: best.phi, gradient: best_g, evaluations: lp.evaluations })
}

/// One row of the optional iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub alpha: f64,
}

/// Writes trace rows as CSV `iter,f,grad_norm,alpha`.
pub fn write_trace_csv<W: std::io::Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["iter", "f", "grad_norm", "alpha"])?;
    for r in rows {
        wr.write_record([
            r.iter.to_string(),
            format!("{:e}", r.f),
            format!("{:e}", r.grad_norm),
            format!("{:e}", r.alpha),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOptions {
    /// Stop once `‖∇f‖ < tolerance`.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Initial inverse Hessian, row-major `d × d`; identity when `None`.
    pub h0: Option<Vec<f64>>,
    pub trace: bool,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iters: 200, h0: None, trace: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
}

/// Outcome of one BFGS iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Converged,
    /// A step was taken; `updated` tells whether the curvature guard let the
    /// inverse-Hessian update through.
    Stepped {
        alpha: f64,
        updated: bool,
    },
    LineSearchFailed,
}

/// Iterate of the BFGS recursion.
#[derive(Debug, Clone)]
pub struct BfgsState {
    pub x: Vec<f64>,
    pub value: f64,
    pub g: Vec<f64>,
    /// Inverse-Hessian approximation, row-major `d × d`.
    pub h: Vec<f64>,
    pub iteration: usize,
    pub evaluations: usize,
}

impl BfgsState {
    pub fn new<O: Objective + ?Sized>(objective: &O, x0: &[f64], h0: Option<&[f64]>) -> Result<Self> {
        let d = objective.dimension();
        if x0.len() != d {
            return Err(OuError::DimensionMismatch { expected: d, got: x0.len() });
        }
        let h = match h0 {
            Some(h) => {
                if h.len() != d * d {
                    return Err(OuError::DimensionMismatch { expected: d * d, got: h.len() });
                }
                check_spd(h, d)?;
                h.to_vec()
            }
            None => identity(d),
        };
        let (value, g) = objective.evaluate(x0);
        if !value.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(OuError::OptimizationFailed("objective is not finite at the starting point".into()));
        }
        if g.len() != d {
            return Err(OuError::DimensionMismatch { expected: d, got: g.len() });
        }
        Ok(Self { x: x0.to_vec(), value, g, h, iteration: 0, evaluations: 1 })
    }

    pub fn dimension(&self) -> usize {
        self.x.len()
    }

    pub fn grad_norm(&self) -> f64 {
        norm(&self.g)
    }

    /// One pass of the loop body: test the gradient, step along `-Hg`, update `H`.
    pub fn step<O: Objective + ?Sized>(&mut self, objective: &O, tolerance: f64) -> StepOutcome {
        if self.grad_norm() < tolerance {
            return StepOutcome::Converged;
        }
        let d = self.dimension();
        let mut p: Vec<f64> = (0..d).map(|i| -dot(&self.h[i * d..(i + 1) * d], &self.g)).collect();
        if !(dot(&p, &self.g) < 0.0) {
            // H lost definiteness numerically; restart from steepest descent.
            self.h = identity(d);
            p = self.g.iter().map(|v| -v).collect();
        }
        let ls = match line_search_from(objective, &self.x, &p, self.value, &self.g) {
            Ok(ls) => ls,
            Err(_) => return StepOutcome::LineSearchFailed,
        };
        self.evaluations += ls.evaluations;
        let x_new = axpy(&self.x, ls.alpha, &p);
        let s: Vec<f64> = x_new.iter().zip(&self.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = ls.gradient.iter().zip(&self.g).map(|(a, b)| a - b).collect();
        let updated = self.update_inverse_hessian(&s, &y);
        self.x = x_new;
        self.value = ls.value;
        self.g = ls.gradient;
        self.iteration += 1;
        StepOutcome::Stepped { alpha: ls.alpha, updated }
    }

    /// `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`, skipped when
    /// `yᵀs ≤ 1e-10 ‖y‖ ‖s‖`. Expanded so that a symmetric `H` stays exactly
    /// symmetric.
    fn update_inverse_hessian(&mut self, s: &[f64], y: &[f64]) -> bool {
        let ys = dot(y, s);
        if !(ys > 1e-10 * norm(y) * norm(s)) {
            return false;
        }
        let d = s.len();
        let rho = 1.0 / ys;
        let hy: Vec<f64> = (0..d).map(|i| dot(&self.h[i * d..(i + 1) * d], y)).collect();
        let yhy = dot(y, &hy);
        let coef = rho * rho * yhy + rho;
        for i in 0..d {
            for j in 0..d {
                self.h[i * d + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + coef * s[i] * s[j];
            }
        }
        true
    }
}

fn identity(d: usize) -> Vec<f64> {
    let mut h = vec![0.0; d * d];
    for i in 0..d {
        h[i * d + i] = 1.0;
    }
    h
}

/// Cholesky-based symmetric positive definiteness check.
fn check_spd(h: &[f64], d: usize) -> Result<()> {
    for i in 0..d {
        for j in 0..i {
            if (h[i * d + j] - h[j * d + i]).abs() > 1e-10 * (1.0 + h[i * d + j].abs()) {
                return Err(OuError::InvalidConfig("initial inverse Hessian is not symmetric".into()));
            }
        }
    }
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                let v = h[i * d + i] - s;
                if !(v > 0.0) {
                    return Err(OuError::InvalidConfig("initial inverse Hessian is not positive definite".into()));
                }
                l[i * d + i] = v.sqrt();
            } else {
                l[i * d + j] = (h[i * d + j] - s) / l[j * d + j];
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    pub trace: Vec<TraceRow>,
}

impl BfgsResult {
    pub fn grad_norm(&self) -> f64 {
        norm(&self.gradient)
    }
}

/// Quasi-Newton minimization from `x0`. A failed line search ends the run
/// with the current (best) point and `converged = false`.
pub fn bfgs_minimize<O: Objective + ?Sized>(objective: &O, x0: &[f64], options: &BfgsOptions) -> Result<BfgsResult> {
    if !(options.tolerance > 0.0) {
        return Err(OuError::InvalidConfig("BFGS tolerance must be > 0".into()));
    }
    let mut state = BfgsState::new(objective, x0, options.h0.as_deref())?;
    let mut trace = Vec::new();
    if options.trace {
        trace.push(TraceRow { iter: 0, f: state.value, grad_norm: state.grad_norm(), alpha: 0.0 });
    }
    let stop = loop {
        if state.grad_norm() < options.tolerance {
            break StopReason::GradientTolerance;
        }
        if state.iteration >= options.max_iters {
            break StopReason::MaxIterations;
        }
        match state.step(objective, options.tolerance) {
            StepOutcome::Converged => break StopReason::GradientTolerance,
            StepOutcome::LineSearchFailed => break StopReason::LineSearchFailed,
            StepOutcome::Stepped { alpha, .. } => {
                if options.trace {
                    trace.push(TraceRow { iter: state.iteration, f: state.value, grad_norm: state.grad_norm(), alpha });
                }
            }
        }
    };
    Ok(BfgsResult {
        converged: stop == StopReason::GradientTolerance,
        x: state.x,
        value: state.value,
        gradient: state.g,
        iterations: state.iteration,
        evaluations: state.evaluations,
        stop,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopConfig {
    pub n_hops: usize,
    /// Half-width of the uniform perturbation applied to every coordinate.
    pub step_scale: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for HopConfig {
    fn default() -> Self {
        Self { n_hops: 50, step_scale: 0.5, temperature: 1.0, seed: 0 }
    }
}

impl HopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return Err(OuError::InvalidConfig(format!("step_scale must be > 0, got {}", self.step_scale)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(OuError::InvalidConfig(format!("temperature must be > 0, got {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HopResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Local descent from `x0`, before any hop.
    pub initial: BfgsResult,
    pub accepted: usize,
    pub skipped: usize,
    /// Best value after each hop (index 0 is the initial descent).
    pub best_history: Vec<f64>,
    pub bfgs_iterations: usize,
}

/// Basin hopping: descend from `x0`, then repeatedly perturb the current
/// point, descend again and accept by the Metropolis rule. Returns the best
/// point seen.
pub fn basin_hop<O: Objective + ?Sized>(
    objective: &O,
    x0: &[f64],
    config: &HopConfig,
    local: &BfgsOptions,
) -> Result<HopResult> {
    config.validate()?;
    let initial = bfgs_minimize(objective, x0, local)?;
    let mut rng = stream(config.seed);
    let mut cur_x = initial.x.clone();
    let mut cur_f = initial.value;
    let mut best_x = cur_x.clone();
    let mut best_f = cur_f;
    let mut history = vec![best_f];
    let mut accepted = 0;
    let mut skipped = 0;
    let mut iterations = initial.iterations;

    for hop in 0..config.n_hops {
        let trial: Vec<f64> =
            cur_x.iter().map(|v| v + rng.random_range(-config.step_scale..=config.step_scale)).collect();
        // Drawn unconditionally so the stream does not depend on outcomes.
        let u: f64 = rng.random();
        match bfgs_minimize(objective, &trial, local) {
            Ok(res) if res.value.is_finite() => {
                iterations += res.iterations;
                let delta = res.value - cur_f;
                if delta < 0.0 || u < (-delta / config.temperature).exp() {
                    accepted += 1;
                    cur_x = res.x;
                    cur_f = res.value;
                    if cur_f < best_f {
                        best_f = cur_f;
                        best_x = cur_x.clone();
                    }
                }
            }
            Ok(_) | Err(_) => {
                skipped += 1;
                debug!("basin hop {hop}: local descent from perturbed point failed; skipped");
            }
        }
        history.push(best_f);
    }

    Ok(HopResult {
        x: best_x,
        value: best_f,
        initial,
        accepted,
        skipped,
        best_history: history,
        bfgs_iterations: iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_sq() -> FnObjective<impl Fn(&[f64]) -> (f64, Vec<f64>)> {
        FnObjective::new(2, |x: &[f64]| (0.5 * dot(x, x), x.to_vec()))
    }

    fn rosenbrock() -> FnObjective<impl Fn(&[f64]) -> (f64, Vec<f64>)> {
        FnObjective::new(2, |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            (f, g)
        })
    }

    #[test]
    fn quadratic_exact_step() {
        let ls = line_search(&half_sq(), &[1.0, 0.0], &[-1.0, 0.0]).unwrap();
        assert_eq!(ls.alpha, 1.0);
        assert_eq!(ls.value, 0.0);
    }

    #[test]
    fn ascent_direction_rejected() {
        let r = line_search(&half_sq(), &[1.0, 0.0], &[1.0, 0.0]);
        assert!(matches!(r, Err(OuError::NotDescent(_))));
    }

    #[test]
    fn rosenbrock_step_satisfies_strong_wolfe() {
        let obj = rosenbrock();
        let x = [-1.2, 1.0];
        let (f0, g0) = obj.evaluate(&x);
        let p: Vec<f64> = g0.iter().map(|v| -v).collect();
        let ls = line_search(&obj, &x, &p).unwrap();
        let (fa, ga) = obj.evaluate(&axpy(&x, ls.alpha, &p));
        let d0 = dot(&g0, &p);
        assert!(ls.alpha > 0.0);
        assert!(fa <= f0 + WOLFE_C1 * ls.alpha * d0);
        assert!(dot(&ga, &p).abs() <= WOLFE_C2 * d0.abs());
    }

    #[test]
    fn shifted_quadratic_in_few_iterations() {
        let c = [3.0, -2.0];
        let obj = FnObjective::new(2, move |x: &[f64]| {
            let d: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
            (dot(&d, &d), d.iter().map(|v| 2.0 * v).collect())
        });
        let opts = BfgsOptions { tolerance: 1e-12, ..Default::default() };
        let r = bfgs_minimize(&obj, &[0.0, 0.0], &opts).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 3);
        assert!((r.x[0] - 3.0).abs() < 1e-8 && (r.x[1] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn rosenbrock_converges() {
        let opts = BfgsOptions { tolerance: 1e-10, max_iters: 500, ..Default::default() };
        let r = bfgs_minimize(&rosenbrock(), &[-1.2, 1.0], &opts).unwrap();
        assert!(r.converged, "{:?}", r.stop);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let r = bfgs_minimize(&half_sq(), &[0.0, 0.0], &BfgsOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
        assert_eq!(r.x, vec![0.0, 0.0]);
    }

    #[test]
    fn h_stays_symmetric_and_values_decrease() {
        let obj = rosenbrock();
        let mut st = BfgsState::new(&obj, &[-1.2, 1.0], None).unwrap();
        for _ in 0..60 {
            let before = st.value;
            let x_before = st.x.clone();
            let g_before = st.g.clone();
            match st.step(&obj, 1e-12) {
                StepOutcome::Stepped { updated, .. } => {
                    assert!(st.value < before);
                    if updated {
                        let s: Vec<f64> = st.x.iter().zip(&x_before).map(|(a, b)| a - b).collect();
                        let y: Vec<f64> = st.g.iter().zip(&g_before).map(|(a, b)| a - b).collect();
                        assert!(dot(&s, &y) > 0.0);
                    }
                    for i in 0..2 {
                        for j in 0..2 {
                            assert!((st.h[i * 2 + j] - st.h[j * 2 + i]).abs() < 1e-10);
                        }
                    }
                }
                _ => break,
            }
        }
    }

    #[test]
    fn rejects_bad_h0() {
        let obj = half_sq();
        let bad = vec![1.0, 2.0, 2.0, 1.0];
        let opts = BfgsOptions { h0: Some(bad), ..Default::default() };
        assert!(matches!(bfgs_minimize(&obj, &[1.0, 1.0], &opts), Err(OuError::InvalidConfig(_))));
    }

    #[test]
    fn trace_rows_emitted() {
        let opts = BfgsOptions { trace: true, tolerance: 1e-10, max_iters: 500, ..Default::default() };
        let r = bfgs_minimize(&rosenbrock(), &[-1.2, 1.0], &opts).unwrap();
        assert_eq!(r.trace.len(), r.iterations + 1);
        let mut buf = Vec::new();
        write_trace_csv(&r.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,f,grad_norm,alpha\n"));
        assert_eq!(text.lines().count(), r.iterations + 2);
    }

    fn wiggle() -> FnObjective<impl Fn(&[f64]) -> (f64, Vec<f64>)> {
        FnObjective::new(1, |x: &[f64]| {
            let v = x[0];
            ((3.0 * v).sin() + (v - 0.5).powi(2), vec![3.0 * (3.0 * v).cos() + 2.0 * (v - 0.5)])
        })
    }

    #[test]
    fn zero_hops_matches_local_descent() {
        let local = BfgsOptions::default();
        let cfg = HopConfig { n_hops: 0, ..Default::default() };
        let hop = basin_hop(&wiggle(), &[3.0], &cfg, &local).unwrap();
        let plain = bfgs_minimize(&wiggle(), &[3.0], &local).unwrap();
        assert_eq!(hop.x, plain.x);
        assert_eq!(hop.value, plain.value);
    }

    #[test]
    fn hops_are_deterministic_and_monotone() {
        let local = BfgsOptions::default();
        let cfg = HopConfig { n_hops: 30, step_scale: 2.0, temperature: 1.0, seed: 17 };
        let a = basin_hop(&wiggle(), &[3.0], &cfg, &local).unwrap();
        let b = basin_hop(&wiggle(), &[3.0], &cfg, &local).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.best_history, b.best_history);
        assert!(a.best_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(a.value <= a.initial.value);
    }
}
