use oucal::process::{
    analytic_moments, simulate_batch, simulate_exact, transition_log_density, GridSpec, InitMode, OUParams, SimConfig,
};
use proptest::prelude::*;

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[test]
fn two_steps_compose_by_convolution() {
    let p = OUParams::new(0.8, 1.7).unwrap();
    let (x0, dt1, dt2) = (0.9, 0.3, 0.45);
    let dens = |a: f64, b: f64, dt: f64| transition_log_density(&p, a, b, dt).unwrap().exp();
    let sd = p.stationary_variance().sqrt();
    let (lo, hi, n) = (-12.0 * sd, 12.0 * sd, 8000);
    let h = (hi - lo) / n as f64;
    for x in [-1.5, -0.2, 0.0, 0.6, 2.1] {
        let conv: f64 = (0..=n)
            .map(|i| {
                let y = lo + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * dens(x0, y, dt1) * dens(y, x, dt2)
            })
            .sum::<f64>()
            * h;
        let direct = dens(x0, x, dt1 + dt2);
        assert!((conv - direct).abs() < 1e-4, "x={x}: {conv} vs {direct}");
    }
}

#[test]
fn long_gap_density_is_the_stationary_normal() {
    let p = OUParams::new(2.0, 1.0).unwrap();
    for x in [-1.0, -0.3, 0.0, 0.45, 1.2] {
        let d = transition_log_density(&p, 3.0, x, 40.0).unwrap().exp();
        assert!((d - normal_pdf(x, 0.0, 0.25)).abs() < 1e-12);
    }
}

#[test]
fn low_volatility_long_path_variance() {
    let p = OUParams::new(0.5, 0.25).unwrap();
    let sim = SimConfig { k: 0.0, seed: 17, init_mode: InitMode::Stationary };
    let t = simulate_exact(&p, &GridSpec::new(0.05, 1_000_000).unwrap(), &sim).unwrap();
    let xs = t.values();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let target = p.sigma_sq() / (2.0 * p.theta());
    assert!((var / target - 1.0).abs() < 0.05, "{var} vs {target}");
}

#[test]
fn uniform_start_spread_follows_k() {
    let p = OUParams::new(0.5, 4.0).unwrap();
    let batch =
        simulate_batch(&[p], &GridSpec::new(0.01, 1).unwrap(), &SimConfig::default().with_seed(3), 4000).unwrap();
    let starts: Vec<f64> = batch.iter().map(|(t, _)| t.values()[0]).collect();
    let half = 30.0 * 2.0;
    assert!(starts.iter().all(|x| x.abs() <= half));
    // Uniform on [-a, a] has variance a²/3.
    let var = starts.iter().map(|x| x * x).sum::<f64>() / starts.len() as f64;
    assert!((var / (half * half / 3.0) - 1.0).abs() < 0.08, "{var}");
}

proptest! {
    #[test]
    fn conditional_variance_is_increasing_and_bounded(
        theta in 1e-3f64..20.0, sigma_sq in 1e-3f64..20.0, dt in 1e-6f64..5.0, bump in 1e-3f64..2.0
    ) {
        let p = OUParams::new(theta, sigma_sq).unwrap();
        let v = p.conditional_variance(dt);
        let v2 = p.conditional_variance(dt * (1.0 + bump));
        prop_assert!(v > 0.0);
        prop_assert!(v <= p.stationary_variance());
        prop_assert!(v2 >= v);
    }

    #[test]
    fn stationary_start_keeps_variance(theta in 0.05f64..5.0, sigma_sq in 0.05f64..5.0, t in 0.0f64..10.0) {
        let p = OUParams::new(theta, sigma_sq).unwrap();
        let s = p.stationary_variance();
        let m = analytic_moments(&p, 0.0, s, t, t).unwrap();
        prop_assert!((m.var_t - s).abs() <= 1e-12 * s);
        prop_assert!((m.cov_ts - s).abs() <= 1e-12 * s);
    }
}
