use oucal::mle::{fit_mle, fit_mle_batch, gmm_initialize, log_likelihood, MleConfig, Stage};
use oucal::process::{simulate_batch, simulate_exact, GridSpec, OUParams, SimConfig, Trajectory};

fn paths(p: OUParams, dt: f64, n: usize, count: usize, seed: u64) -> Vec<Trajectory> {
    simulate_batch(&[p], &GridSpec::new(dt, n).unwrap(), &SimConfig::default().with_seed(seed), count)
        .unwrap()
        .into_iter()
        .map(|(t, _)| t)
        .collect()
}

fn sigma_sq_rmse(paths: &[Trajectory], truth: f64) -> f64 {
    let fits = fit_mle_batch(paths, &MleConfig { basin_hops: 0, ..Default::default() });
    let sq: Vec<f64> = fits.into_iter().map(|f| (f.unwrap().params_hat.sigma_sq() - truth).powi(2)).collect();
    (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
}

#[test]
fn sigma_sq_error_shrinks_with_path_length() {
    let p = OUParams::new(2.0, 1.0).unwrap();
    let rmse: Vec<f64> = [500, 5000, 50_000].iter().map(|&n| sigma_sq_rmse(&paths(p, 0.01, n, 100, 77), 1.0)).collect();
    assert!(rmse[0] > rmse[1] && rmse[1] > rmse[2], "{rmse:?}");
    // Asymptotic standard error σ²·sqrt(2/n).
    for (r, n) in rmse.iter().zip([500.0, 5000.0, 50_000.0]) {
        let se = (2.0f64 / n).sqrt();
        assert!(*r < 1.5 * se && *r > 0.6 * se, "n={n}: rmse {r} vs {se}");
    }
}

#[test]
fn rescaling_the_path_rescales_sigma_sq_only() {
    let p = OUParams::new(1.3, 0.7).unwrap();
    let t = simulate_exact(&p, &GridSpec::new(0.02, 800).unwrap(), &SimConfig::default().with_seed(4)).unwrap();
    let cfg = MleConfig { grad_tolerance: 1e-10, ..Default::default() };
    let base = fit_mle(&t, &cfg).unwrap().params_hat;
    for c in [0.1, 3.0, 25.0] {
        let r = fit_mle(&t.scaled(c).unwrap(), &cfg).unwrap().params_hat;
        assert!((r.theta() - base.theta()).abs() < 1e-4 * base.theta(), "c={c}");
        assert!((r.sigma_sq() / (c * c) - base.sigma_sq()).abs() < 1e-4 * base.sigma_sq(), "c={c}");
    }
}

#[test]
fn fit_never_ends_below_its_start() {
    for (i, t) in paths(OUParams::new(0.5, 4.0).unwrap(), 0.05, 300, 20, 9).iter().enumerate() {
        let g = gmm_initialize(t).unwrap();
        let start = log_likelihood(&OUParams::new(g.theta_hat, g.sigma_sq_hat).unwrap(), t);
        let r = fit_mle(t, &MleConfig { seed: i as u64, ..Default::default() }).unwrap();
        assert!(r.log_likelihood >= start, "path {i}");
        assert!(r.stage_reached >= Stage::Bfgs);
        assert!(r.params_hat.theta() > 0.0 && r.params_hat.sigma_sq() > 0.0);
    }
}

#[test]
fn single_strong_path_sigma_sq_within_four_standard_errors() {
    let p = OUParams::new(2.0, 1.0).unwrap();
    for seed in 0..10 {
        let t = simulate_exact(&p, &GridSpec::new(0.01, 500).unwrap(), &SimConfig::default().with_seed(seed)).unwrap();
        let r = fit_mle(&t, &MleConfig::default()).unwrap();
        assert!((r.params_hat.sigma_sq() - 1.0).abs() < 4.0 * (2.0f64 / 500.0).sqrt(), "seed {seed}");
    }
}

#[test]
fn weak_regime_median_theta() {
    let batch = paths(OUParams::new(0.2, 1.0).unwrap(), 0.01, 500, 500, 12);
    let mut th: Vec<f64> = fit_mle_batch(&batch, &MleConfig { seed: 1, ..Default::default() })
        .into_iter()
        .map(|f| f.unwrap().params_hat.theta())
        .collect();
    th.sort_by(f64::total_cmp);
    let median = 0.5 * (th[249] + th[250]);
    assert!((median - 0.2).abs() < 0.15, "median {median}");
}
