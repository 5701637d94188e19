//! The Ornstein-Uhlenbeck process `dX = -θ X dt + σ dW`: parameters, sampling
//! grids, exact simulation, analytic moments and the Gaussian transition
//! density.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OuError, Result};
use crate::rng::{derive_seed, mix64, stream};

/// Parameter vector `(θ, σ²)`, both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct OUParams {
    theta: f64,
    sigma_sq: f64,
}

#[derive(Deserialize)]
struct RawParams {
    theta: f64,
    sigma_sq: f64,
}

impl TryFrom<RawParams> for OUParams {
    type Error = OuError;

    fn try_from(raw: RawParams) -> Result<Self> {
        OUParams::new(raw.theta, raw.sigma_sq)
    }
}

impl OUParams {
    pub fn new(theta: f64, sigma_sq: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(OuError::ParameterDomain(format!("theta must be finite and > 0, got {theta}")));
        }
        if !(sigma_sq.is_finite() && sigma_sq > 0.0) {
            return Err(OuError::ParameterDomain(format!("sigma_sq must be finite and > 0, got {sigma_sq}")));
        }
        let p = Self { theta, sigma_sq };
        let sv = p.stationary_variance();
        if !(sv.is_finite() && sv > 0.0) {
            return Err(OuError::ParameterDomain(format!(
                "stationary variance sigma_sq / (2 theta) = {sv} is not finite and positive"
            )));
        }
        Ok(p)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_sq.sqrt()
    }

    /// Long-run variance `σ² / 2θ`.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma_sq / (2.0 * self.theta)
    }

    /// Conditional variance accumulated over a gap `dt`,
    /// `V(dt) = σ²/2θ · (1 - e^{-2θ dt})`, evaluated through `expm1` so that
    /// tiny `θ·dt` does not cancel.
    pub fn conditional_variance(&self, dt: f64) -> f64 {
        self.stationary_variance() * -(-2.0 * self.theta * dt).exp_m1()
    }

    /// Stable 64-bit key identifying this parameter combination.
    pub fn key(&self) -> u64 {
        mix64(mix64(self.theta.to_bits()) ^ self.sigma_sq.to_bits())
    }
}

/// Uniform observation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dt: f64,
    pub n_steps: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { dt: 0.01, n_steps: 500 }
    }
}

impl GridSpec {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        let g = Self { dt, n_steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(OuError::DegenerateGrid(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(OuError::DegenerateGrid("n_steps must be >= 1".into()));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }
}

/// A path `X_{t_0} .. X_{t_n}` observed on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    x: Vec<f64>,
    grid: GridSpec,
}

impl Trajectory {
    pub fn new(x: Vec<f64>, grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        if x.len() != grid.n_steps + 1 {
            return Err(OuError::DimensionMismatch { expected: grid.n_steps + 1, got: x.len() });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(OuError::NonFinite(i));
        }
        Ok(Self { x, grid })
    }

    /// Builds a trajectory from raw values, deriving `n_steps` from the length.
    pub fn from_values(x: Vec<f64>, dt: f64) -> Result<Self> {
        if x.len() < 2 {
            return Err(OuError::TooShort { needed: 2, got: x.len() });
        }
        let grid = GridSpec::new(dt, x.len() - 1)?;
        Self::new(x, grid)
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Consecutive `(x_prev, x)` pairs.
    pub fn transitions(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.windows(2).map(|w| (w[0], w[1]))
    }

    /// Multiplies every value by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.x.iter().map(|v| v * c).collect(), self.grid)
    }
}

/// Gaussian law of `X_{s+dt}` given `X_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionMoments {
    pub mean: f64,
    pub variance: f64,
}

/// How the initial value `X_0` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "x0")]
pub enum InitMode {
    /// `X_0 ~ Uniform[-kσ, kσ]`.
    UniformKSigma,
    Fixed(f64),
    /// `X_0 ~ Normal(0, σ²/2θ)`.
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub k: f64,
    pub seed: u64,
    pub init_mode: InitMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { k: 30.0, seed: 0, init_mode: InitMode::UniformKSigma }
    }
}

impl SimConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(OuError::InvalidConfig(format!("k must be >= 0, got {}", self.k)));
        }
        if let InitMode::Fixed(x0) = self.init_mode {
            if !x0.is_finite() {
                return Err(OuError::InvalidConfig("fixed x0 must be finite".into()));
            }
        }
        Ok(())
    }
}

pub fn transition_moments(params: &OUParams, x_prev: f64, dt: f64) -> Result<TransitionMoments> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(OuError::DegenerateGrid(format!("dt must be >= 0, got {dt}")));
    }
    Ok(TransitionMoments { mean: x_prev * (-params.theta() * dt).exp(), variance: params.conditional_variance(dt) })
}

/// Unconditional moments at times `t` and `s` from a random start with the
/// given mean and variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticMoments {
    pub mean_t: f64,
    pub var_t: f64,
    /// Covariance `C(t, s)` under a stationary start.
    pub cov_ts: f64,
}

pub fn analytic_moments(params: &OUParams, x0_mean: f64, x0_var: f64, t: f64, s: f64) -> Result<AnalyticMoments> {
    if !(t >= 0.0 && s >= 0.0) {
        return Err(OuError::ParameterDomain(format!("times must be >= 0, got t={t}, s={s}")));
    }
    if !(x0_var >= 0.0) {
        return Err(OuError::ParameterDomain(format!("x0_var must be >= 0, got {x0_var}")));
    }
    let sv = params.stationary_variance();
    let theta = params.theta();
    let var_t = if x0_var == sv { sv } else { sv + (-2.0 * theta * t).exp() * (x0_var - sv) };
    Ok(AnalyticMoments { mean_t: x0_mean * (-theta * t).exp(), var_t, cov_ts: sv * (-theta * (t - s).abs()).exp() })
}

pub fn transition_log_density(params: &OUParams, x_prev: f64, x: f64, dt: f64) -> Result<f64> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(OuError::DegenerateGrid(format!("dt must be > 0, got {dt}")));
    }
    Ok(gaussian_transition_log_density(params.theta(), params.sigma_sq(), x_prev, x, dt))
}

/// Unchecked kernel shared with the likelihood.
#[inline]
pub(crate) fn gaussian_transition_log_density(theta: f64, sigma_sq: f64, x_prev: f64, x: f64, dt: f64) -> f64 {
    let v = sigma_sq / (2.0 * theta) * -(-2.0 * theta * dt).exp_m1();
    let r = x - x_prev * (-theta * dt).exp();
    -0.5 * (2.0 * std::f64::consts::PI * v).ln() - r * r / (2.0 * v)
}

fn draw_initial<R: Rng>(params: &OUParams, sim: &SimConfig, rng: &mut R) -> f64 {
    match sim.init_mode {
        InitMode::Fixed(x0) => x0,
        InitMode::UniformKSigma => {
            let half = sim.k * params.sigma();
            if half == 0.0 {
                0.0
            } else {
                rng.random_range(-half..=half)
            }
        }
        InitMode::Stationary => {
            let z: f64 = rng.sample(StandardNormal);
            z * params.stationary_variance().sqrt()
        }
    }
}

/// Samples a path from the exact Gaussian transition law.
pub fn simulate_exact(params: &OUParams, grid: &GridSpec, sim: &SimConfig) -> Result<Trajectory> {
    grid.validate()?;
    sim.validate()?;
    let mut rng = stream(sim.seed);
    let decay = (-params.theta() * grid.dt).exp();
    let sd = params.conditional_variance(grid.dt).sqrt();
    let mut x = Vec::with_capacity(grid.n_steps + 1);
    let mut cur = draw_initial(params, sim, &mut rng);
    x.push(cur);
    for _ in 0..grid.n_steps {
        let xi: f64 = rng.sample(StandardNormal);
        cur = cur * decay + sd * xi;
        x.push(cur);
    }
    Trajectory::new(x, *grid)
}

/// Seed of trajectory `index` for a parameter combination under `master`.
///
/// The seed depends on the combination's values, not its position in the
/// request, so reordering combinations reorders but does not change the
/// generated dataset.
pub fn trajectory_seed(master: u64, params: &OUParams, index: usize) -> u64 {
    derive_seed(master, params.key(), index as u64)
}

/// Generates `count_per_params` labeled paths for each parameter combination.
/// Output is grouped by combination in request order, then by trajectory index.
pub fn simulate_batch(
    params_list: &[OUParams],
    grid: &GridSpec,
    sim: &SimConfig,
    count_per_params: usize,
) -> Result<Vec<(Trajectory, OUParams)>> {
    if count_per_params == 0 {
        return Err(OuError::InvalidConfig("count_per_params must be >= 1".into()));
    }
    grid.validate()?;
    sim.validate()?;
    let jobs: Vec<(OUParams, usize)> =
        params_list.iter().flat_map(|p| (0..count_per_params).map(move |i| (*p, i))).collect();
    jobs.par_iter()
        .map(|(p, i)| {
            let cfg = sim.with_seed(trajectory_seed(sim.seed, p, *i));
            simulate_exact(p, grid, &cfg).map(|t| (t, *p))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(theta: f64, sigma_sq: f64) -> OUParams {
        OUParams::new(theta, sigma_sq).unwrap()
    }

    #[test]
    fn params_reject_nonpositive() {
        assert!(matches!(OUParams::new(-1.0, 1.0), Err(OuError::ParameterDomain(_))));
        assert!(matches!(OUParams::new(1.0, 0.0), Err(OuError::ParameterDomain(_))));
        assert!(matches!(OUParams::new(f64::NAN, 1.0), Err(OuError::ParameterDomain(_))));
        assert!(OUParams::new(1e-300, 1e300).is_err());
    }

    #[test]
    fn params_deserialize_validates() {
        assert!(serde_json::from_str::<OUParams>(r#"{"theta":2.0,"sigma_sq":1.0}"#).is_ok());
        assert!(serde_json::from_str::<OUParams>(r#"{"theta":-2.0,"sigma_sq":1.0}"#).is_err());
    }

    #[test]
    fn long_gap_variance_is_stationary() {
        let m = transition_moments(&p(2.0, 1.0), 0.0, 1e3).unwrap();
        assert!((m.variance - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_gap_is_identity() {
        let m = transition_moments(&p(0.7, 3.0), 1.25, 0.0).unwrap();
        assert_eq!(m.mean, 1.25);
        assert_eq!(m.variance, 0.0);
    }

    #[test]
    fn moments_closed_form() {
        let m = transition_moments(&p(0.5, 4.0), 1.0, 1.0).unwrap();
        // e^{-0.5} and 4(1 - e^{-1}) to 20 digits.
        assert!((m.mean - 0.606_530_659_712_633_4).abs() < 1e-12);
        assert!((m.variance - 2.528_482_235_314_231).abs() < 1e-12);
    }

    #[test]
    fn tiny_gap_variance_has_no_cancellation() {
        let params = p(1.0, 1.0);
        let dt = 1e-12;
        let v = params.conditional_variance(dt);
        // V ≈ σ² dt (1 - θ dt)
        assert!((v / dt - 1.0).abs() < 1e-10);
    }

    #[test]
    fn negative_gap_rejected() {
        assert!(transition_moments(&p(1.0, 1.0), 0.0, -1.0).is_err());
        assert!(matches!(transition_log_density(&p(1.0, 1.0), 0.0, 0.0, 0.0), Err(OuError::DegenerateGrid(_))));
    }

    #[test]
    fn analytic_moments_identities() {
        let params = p(0.2, 1.0);
        let m0 = analytic_moments(&params, 3.0, 0.7, 0.0, 0.0).unwrap();
        assert_eq!(m0.mean_t, 3.0);
        assert!((m0.var_t - 0.7).abs() < 1e-15);
        let ms = analytic_moments(&params, 0.0, 2.5, 13.0, 13.0).unwrap();
        assert_eq!(ms.var_t, 2.5);
        assert!((ms.cov_ts - 2.5).abs() < 1e-15);
        assert!(analytic_moments(&params, 0.0, 1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn log_density_at_mode() {
        let params = p(1.3, 0.8);
        let dt = 0.2;
        let x_prev = 0.9;
        let m = transition_moments(&params, x_prev, dt).unwrap();
        let ld = transition_log_density(&params, x_prev, m.mean, dt).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI * m.variance).ln();
        assert!((ld - expected).abs() < 1e-14);
    }

    #[test]
    fn simulate_is_deterministic() {
        let params = p(2.0, 1.0);
        let grid = GridSpec::default();
        let sim = SimConfig::default().with_seed(11);
        let a = simulate_exact(&params, &grid, &sim).unwrap();
        let b = simulate_exact(&params, &grid, &sim).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 501);
        let c = simulate_exact(&params, &grid, &sim.with_seed(12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_start_within_k_sigma() {
        let params = p(0.5, 4.0);
        let grid = GridSpec::new(0.01, 1).unwrap();
        for seed in 0..200 {
            let sim = SimConfig { k: 3.0, seed, init_mode: InitMode::UniformKSigma };
            let x0 = simulate_exact(&params, &grid, &sim).unwrap().values()[0];
            assert!(x0.abs() <= 6.0);
        }
    }

    #[test]
    fn lag_one_autocorrelation() {
        let params = p(1.0, 1.0);
        let grid = GridSpec::new(0.1, 100_000).unwrap();
        let sim = SimConfig { k: 0.0, seed: 3, init_mode: InitMode::Stationary };
        let x = simulate_exact(&params, &grid, &sim).unwrap();
        let v = x.values();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let cov = v.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1.0);
        let rho = cov / var;
        let expected = (-0.1f64).exp();
        assert!((rho / expected - 1.0).abs() < 0.02, "rho = {rho}");
    }

    #[test]
    fn zero_steps_is_degenerate() {
        let grid = GridSpec { dt: 0.01, n_steps: 0 };
        let r = simulate_exact(&p(1.0, 1.0), &grid, &SimConfig::default());
        assert!(matches!(r, Err(OuError::DegenerateGrid(_))));
    }

    #[test]
    fn batch_counts_and_single_element() {
        let params = [p(2.0, 1.0), p(0.2, 1.0), p(0.5, 4.0), p(0.5, 0.25)];
        let grid = GridSpec::new(0.01, 20).unwrap();
        let sim = SimConfig::default().with_seed(5);
        let ds = simulate_batch(&params, &grid, &sim, 50).unwrap();
        assert_eq!(ds.len(), 200);
        assert_eq!(ds[0].1, params[0]);
        assert_eq!(ds[199].1, params[3]);

        let one = simulate_batch(&params[..1], &grid, &sim, 1).unwrap();
        let direct = simulate_exact(&params[0], &grid, &sim.with_seed(trajectory_seed(5, &params[0], 0))).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].0, direct);
    }

    #[test]
    fn batch_order_does_not_change_multiset() {
        let a = p(2.0, 1.0);
        let b = p(0.5, 0.25);
        let grid = GridSpec::new(0.01, 30).unwrap();
        let sim = SimConfig::default().with_seed(9);
        let digest = |ds: Vec<(Trajectory, OUParams)>| {
            let mut v: Vec<Vec<u64>> =
                ds.iter().map(|(t, _)| t.values().iter().map(|x| x.to_bits()).collect()).collect();
            v.sort();
            v
        };
        let ab = digest(simulate_batch(&[a, b], &grid, &sim, 5).unwrap());
        let ba = digest(simulate_batch(&[b, a], &grid, &sim, 5).unwrap());
        assert_eq!(ab, ba);
    }

    #[test]
    fn trajectory_rejects_bad_input() {
        let g = GridSpec::new(0.1, 2).unwrap();
        assert!(matches!(Trajectory::new(vec![0.0, 1.0], g), Err(OuError::DimensionMismatch { .. })));
        assert!(matches!(Trajectory::new(vec![0.0, f64::NAN, 1.0], g), Err(OuError::NonFinite(1))));
    }
}
