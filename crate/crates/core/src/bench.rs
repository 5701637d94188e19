//! Benchmark harness: the four reference regimes, summary statistics, and a
//! side-by-side MLE / LSTM comparison on matched path sets.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OuError, Result};
use crate::io::fmt_f64;
use crate::mle::{fit_mle, MleConfig};
use crate::neural::LstmModel;
use crate::process::{simulate_batch, GridSpec, InitMode, OUParams, SimConfig, Trajectory};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeName {
    StrongMeanReversion,
    WeakMeanReversion,
    HighVolatility,
    LowVolatility,
}

impl RegimeName {
    pub const ALL: [RegimeName; 4] = [
        RegimeName::StrongMeanReversion,
        RegimeName::WeakMeanReversion,
        RegimeName::HighVolatility,
        RegimeName::LowVolatility,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeName::StrongMeanReversion => "strong_mean_reversion",
            RegimeName::WeakMeanReversion => "weak_mean_reversion",
            RegimeName::HighVolatility => "high_volatility",
            RegimeName::LowVolatility => "low_volatility",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }

    /// `(θ, σ²)` of the regime.
    pub fn values(&self) -> (f64, f64) {
        match self {
            RegimeName::StrongMeanReversion => (2.0, 1.0),
            RegimeName::WeakMeanReversion => (0.2, 1.0),
            RegimeName::HighVolatility => (0.5, 4.0),
            RegimeName::LowVolatility => (0.5, 0.25),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub name: RegimeName,
    pub params: OUParams,
    pub stationary_variance: f64,
}

impl Regime {
    pub fn new(name: RegimeName) -> Self {
        let (theta, sigma_sq) = name.values();
        let params = OUParams::new(theta, sigma_sq).expect("reference regimes are valid");
        Self { name, params, stationary_variance: params.stationary_variance() }
    }
}

/// Strong and weak mean reversion, high and low volatility.
pub fn make_regimes() -> Vec<Regime> {
    RegimeName::ALL.into_iter().map(Regime::new).collect()
}

/// Mean, median, population standard deviation and RMSE against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamStats {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub rmse: f64,
}

pub fn param_stats(values: &[f64], truth: f64) -> Result<ParamStats> {
    if values.is_empty() {
        return Err(OuError::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 { 0.5 * (sorted[mid - 1] + sorted[mid]) } else { sorted[mid] };
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let rmse = (values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / n).sqrt();
    Ok(ParamStats { mean, median, std, rmse })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub theta: ParamStats,
    pub sigma_sq: ParamStats,
}

/// Summary row for a set of `[θ̂, σ̂²]` estimates of a known truth.
pub fn aggregate(estimates: &[[f64; 2]], truth: &OUParams) -> Result<EstimatorStats> {
    let th: Vec<f64> = estimates.iter().map(|e| e[0]).collect();
    let s2: Vec<f64> = estimates.iter().map(|e| e[1]).collect();
    Ok(EstimatorStats { theta: param_stats(&th, truth.theta())?, sigma_sq: param_stats(&s2, truth.sigma_sq())? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Mle,
    Rnn,
}

impl Estimator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::Mle => "mle",
            Estimator::Rnn => "rnn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mle" => Some(Estimator::Mle),
            "rnn" => Some(Estimator::Rnn),
            _ => None,
        }
    }
}

/// One estimator's result on one path. `estimate` is `None` on failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub regime: RegimeName,
    pub path_idx: usize,
    pub estimator: Estimator,
    pub estimate: Option<[f64; 2]>,
    pub wall_time_s: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    /// `None` when every path failed.
    pub stats: Option<EstimatorStats>,
    pub n_succeeded: usize,
    pub n_failed: usize,
    #[serde(skip)]
    pub wall_time_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: RegimeName,
    pub truth: OUParams,
    pub stationary_variance: f64,
    pub n_paths: usize,
    pub estimators: Vec<EstimatorSummary>,
}

impl RegimeReport {
    pub fn summary(&self, e: Estimator) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|s| s.estimator == e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub regimes: Vec<RegimeName>,
    pub n_paths: usize,
    pub grid: GridSpec,
    pub k: f64,
    pub init_mode: InitMode,
    pub seed: u64,
    pub mle: MleConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            regimes: RegimeName::ALL.to_vec(),
            n_paths: 500,
            grid: GridSpec::default(),
            k: 30.0,
            init_mode: InitMode::UniformKSigma,
            seed: 0,
            mle: MleConfig::default(),
        }
    }
}

const INFER_KEY: u64 = 0x494e_4645_52;
const TRAIN_KEY: u64 = 0x5452_4149_4e;

impl BenchConfig {
    /// Master seed of the inference path set; distinct from any training set
    /// drawn with `derive_seed(seed, key, 0)` for another key.
    pub fn inference_seed(&self) -> u64 {
        derive_seed(self.seed, INFER_KEY, 0)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig { k: self.k, seed: self.inference_seed(), init_mode: self.init_mode }
    }

    /// Master seed of the labeled training corpus.
    pub fn training_seed(&self) -> u64 {
        derive_seed(self.seed, TRAIN_KEY, 0)
    }

    /// `per_regime` labeled paths from each configured regime, on the same
    /// grid and initial law as the inference sets but from disjoint streams.
    pub fn training_set(&self, per_regime: usize) -> Result<Vec<(Trajectory, OUParams)>> {
        let params: Vec<OUParams> = self.regimes.iter().map(|r| Regime::new(*r).params).collect();
        let sim = SimConfig { seed: self.training_seed(), ..self.sim_config() };
        simulate_batch(&params, &self.grid, &sim, per_regime)
    }

    /// The matched path set both estimators see for `regime`.
    pub fn inference_paths(&self, regime: &Regime) -> Result<Vec<Trajectory>> {
        Ok(simulate_batch(&[regime.params], &self.grid, &self.sim_config(), self.n_paths)?
            .into_iter()
            .map(|(t, _)| t)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub regimes: Vec<RegimeReport>,
    pub estimates: Vec<PathEstimate>,
}

fn summarize(estimator: Estimator, truth: &OUParams, rows: &[PathEstimate]) -> Result<EstimatorSummary> {
    let ok: Vec<[f64; 2]> = rows.iter().filter_map(|r| r.estimate).collect();
    Ok(EstimatorSummary {
        estimator,
        stats: if ok.is_empty() { None } else { Some(aggregate(&ok, truth)?) },
        n_succeeded: ok.len(),
        n_failed: rows.len() - ok.len(),
        wall_time_total: rows.iter().map(|r| r.wall_time_s).sum(),
    })
}

/// MLE on each path, in path order.
pub fn run_mle(regime: RegimeName, paths: &[Trajectory], config: &MleConfig, seed: u64) -> Vec<PathEstimate> {
    paths
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let cfg = MleConfig { seed: derive_seed(seed, regime as u64, i as u64), ..config.clone() };
            let clock = Instant::now();
            let res = fit_mle(t, &cfg);
            let elapsed = clock.elapsed().as_secs_f64();
            match res {
                Ok(r) => PathEstimate {
                    regime,
                    path_idx: i,
                    estimator: Estimator::Mle,
                    estimate: Some([r.params_hat.theta(), r.params_hat.sigma_sq()]),
                    wall_time_s: r.wall_time,
                    converged: r.converged,
                },
                Err(e) => {
                    log::warn!("{} path {i}: MLE failed: {e}", regime.as_str());
                    PathEstimate {
                        regime,
                        path_idx: i,
                        estimator: Estimator::Mle,
                        estimate: None,
                        wall_time_s: elapsed,
                        converged: false,
                    }
                }
            }
        })
        .collect()
}

/// Network inference on each path, in path order.
pub fn run_rnn(regime: RegimeName, paths: &[Trajectory], model: &LstmModel) -> Vec<PathEstimate> {
    paths
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let clock = Instant::now();
            let pred = model.predict(t.values());
            let wall_time_s = clock.elapsed().as_secs_f64();
            let estimate = match pred {
                Ok(p) if p.iter().all(|v| v.is_finite()) => Some(p),
                Ok(_) => None,
                Err(e) => {
                    log::warn!("{} path {i}: inference failed: {e}", regime.as_str());
                    None
                }
            };
            PathEstimate {
                regime,
                path_idx: i,
                estimator: Estimator::Rnn,
                converged: estimate.is_some(),
                estimate,
                wall_time_s,
            }
        })
        .collect()
}

/// Simulates `n_paths` fresh paths per regime, runs MLE on each and (when a
/// model is supplied) network inference on the same set, and aggregates.
pub fn run_benchmark(config: &BenchConfig, model: Option<&LstmModel>) -> Result<BenchReport> {
    if config.n_paths == 0 {
        return Err(OuError::InvalidConfig("n_paths must be >= 1".into()));
    }
    config.grid.validate()?;
    config.mle.validate()?;
    let mut regimes = Vec::new();
    let mut estimates = Vec::new();
    for name in &config.regimes {
        let regime = Regime::new(*name);
        let paths = config.inference_paths(&regime)?;
        log::info!("{}: fitting {} paths", name.as_str(), paths.len());
        let mle_rows = run_mle(*name, &paths, &config.mle, config.seed);
        let mut summaries = vec![summarize(Estimator::Mle, &regime.params, &mle_rows)?];
        estimates.extend(mle_rows);
        if let Some(m) = model {
            let rnn_rows = run_rnn(*name, &paths, m);
            summaries.push(summarize(Estimator::Rnn, &regime.params, &rnn_rows)?);
            estimates.extend(rnn_rows);
        }
        regimes.push(RegimeReport {
            regime: *name,
            truth: regime.params,
            stationary_variance: regime.stationary_variance,
            n_paths: paths.len(),
            estimators: summaries,
        });
    }
    Ok(BenchReport { config: config.clone(), regimes, estimates })
}

/// Rebuilds regime rows from per-path estimates (e.g. a persisted CSV).
pub fn regime_reports_from_estimates(rows: &[PathEstimate]) -> Result<Vec<RegimeReport>> {
    let mut order: Vec<RegimeName> = Vec::new();
    for r in rows {
        if !order.contains(&r.regime) {
            order.push(r.regime);
        }
    }
    order
        .into_iter()
        .map(|name| {
            let regime = Regime::new(name);
            let mut summaries = Vec::new();
            let mut n_paths = 0;
            for est in [Estimator::Mle, Estimator::Rnn] {
                let mine: Vec<PathEstimate> =
                    rows.iter().filter(|r| r.regime == name && r.estimator == est).cloned().collect();
                if !mine.is_empty() {
                    n_paths = n_paths.max(mine.len());
                    summaries.push(summarize(est, &regime.params, &mine)?);
                }
            }
            Ok(RegimeReport {
                regime: name,
                truth: regime.params,
                stationary_variance: regime.stationary_variance,
                n_paths,
                estimators: summaries,
            })
        })
        .collect()
}

fn opt_field(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Per-path CSV: `regime,path_idx,estimator,theta_hat,sigma_sq_hat,wall_time_s,converged`.
/// Failed paths leave the estimate fields empty.
pub fn estimates_csv(rows: &[PathEstimate]) -> String {
    let mut s = String::from("regime,path_idx,estimator,theta_hat,sigma_sq_hat,wall_time_s,converged\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.regime.as_str(),
            r.path_idx,
            r.estimator.as_str(),
            opt_field(r.estimate.map(|e| e[0])),
            opt_field(r.estimate.map(|e| e[1])),
            fmt_f64(r.wall_time_s),
            r.converged
        );
    }
    s
}

pub fn parse_estimates_csv(text: &str) -> Result<Vec<PathEstimate>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| OuError::Parse(format!("estimates row {}: bad {what}", i + 1));
        if rec.len() != 7 {
            return Err(bad("field count"));
        }
        let regime = RegimeName::parse(&rec[0]).ok_or_else(|| bad("regime"))?;
        let path_idx = rec[1].parse().map_err(|_| bad("path_idx"))?;
        let estimator = Estimator::parse(&rec[2]).ok_or_else(|| bad("estimator"))?;
        let estimate = if rec[3].is_empty() || rec[4].is_empty() {
            None
        } else {
            Some([rec[3].parse().map_err(|_| bad("theta_hat"))?, rec[4].parse().map_err(|_| bad("sigma_sq_hat"))?])
        };
        out.push(PathEstimate {
            regime,
            path_idx,
            estimator,
            estimate,
            wall_time_s: rec[5].parse().map_err(|_| bad("wall_time_s"))?,
            converged: rec[6].parse().map_err(|_| bad("converged"))?,
        });
    }
    Ok(out)
}

/// Markdown table laid out like a per-regime comparison: one row per
/// estimator, θ̂ and σ̂² statistic blocks side by side.
pub fn report_markdown(regimes: &[RegimeReport]) -> String {
    let mut s = String::new();
    s.push_str("| Regime | True θ | True σ² | σ²/2θ | Estimator | θ̂ Mean | θ̂ Median | θ̂ Std | θ̂ RMSE | σ̂² Mean | σ̂² Median | σ̂² Std | σ̂² RMSE | OK | Failed |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|---|---|---|\n");
    for r in regimes {
        for e in &r.estimators {
            let cells = match &e.stats {
                Some(st) => [st.theta, st.sigma_sq]
                    .iter()
                    .flat_map(|p| [p.mean, p.median, p.std, p.rmse])
                    .map(|v| format!("{v:.4}"))
                    .collect::<Vec<_>>()
                    .join(" | "),
                None => vec!["–"; 8].join(" | "),
            };
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                r.regime.as_str(),
                r.truth.theta(),
                r.truth.sigma_sq(),
                r.stationary_variance,
                e.estimator.as_str().to_uppercase(),
                cells,
                e.n_succeeded,
                e.n_failed
            );
        }
    }
    s
}

pub fn report_csv(regimes: &[RegimeReport]) -> String {
    let mut s = String::from(
        "regime,theta,sigma_sq,stationary_variance,estimator,n_paths,n_succeeded,n_failed,\
theta_mean,theta_median,theta_std,theta_rmse,sigma_sq_mean,sigma_sq_median,sigma_sq_std,sigma_sq_rmse\n",
    );
    for r in regimes {
        for e in &r.estimators {
            let stats = match &e.stats {
                Some(st) => [st.theta, st.sigma_sq]
                    .iter()
                    .flat_map(|p| [p.mean, p.median, p.std, p.rmse])
                    .map(fmt_f64)
                    .collect::<Vec<_>>()
                    .join(","),
                None => vec![""; 8].join(","),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.regime.as_str(),
                fmt_f64(r.truth.theta()),
                fmt_f64(r.truth.sigma_sq()),
                fmt_f64(r.stationary_variance),
                e.estimator.as_str(),
                r.n_paths,
                e.n_succeeded,
                e.n_failed,
                stats
            );
        }
    }
    s
}

#[derive(Serialize)]
struct ReportJson<'a> {
    config: &'a BenchConfig,
    regimes: &'a [RegimeReport],
}

/// Machine-readable report; contains no wall-clock figures, so a fixed seed
/// reproduces it byte for byte.
pub fn report_json(report: &BenchReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ReportJson { config: &report.config, regimes: &report.regimes })? + "\n")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingRow {
    pub regime: RegimeName,
    pub estimator: Estimator,
    pub n_paths: usize,
    pub wall_time_total_s: f64,
    pub wall_time_mean_s: f64,
}

pub fn timing_rows(regimes: &[RegimeReport]) -> Vec<TimingRow> {
    regimes
        .iter()
        .flat_map(|r| {
            r.estimators.iter().map(move |e| {
                let n = e.n_succeeded + e.n_failed;
                TimingRow {
                    regime: r.regime,
                    estimator: e.estimator,
                    n_paths: n,
                    wall_time_total_s: e.wall_time_total,
                    wall_time_mean_s: if n > 0 { e.wall_time_total / n as f64 } else { 0.0 },
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn regimes_match_reference_values() {
        let r = make_regimes();
        assert_eq!(r.len(), 4);
        let sv: Vec<f64> = r.iter().map(|x| x.stationary_variance).collect();
        assert_eq!(sv, vec![0.25, 2.5, 4.0, 0.25]);
        for x in &r {
            assert_eq!(x.stationary_variance, x.params.sigma_sq() / (2.0 * x.params.theta()));
        }
    }

    #[test]
    fn stats_at_truth_are_zero_spread() {
        let t = OUParams::new(2.0, 1.0).unwrap();
        let s = aggregate(&[[2.0, 1.0]; 5], &t).unwrap();
        assert_eq!(s.theta, ParamStats { mean: 2.0, median: 2.0, std: 0.0, rmse: 0.0 });
        assert_eq!(s.sigma_sq.rmse, 0.0);
    }

    #[test]
    fn stats_two_points() {
        let s = param_stats(&[1.0, 3.0], 2.0).unwrap();
        assert_eq!(s, ParamStats { mean: 2.0, median: 2.0, std: 1.0, rmse: 1.0 });
        assert!(matches!(param_stats(&[], 1.0), Err(OuError::EmptyInput)));
    }

    #[test]
    fn rmse_bias_std_identity() {
        let mut rng = crate::rng::stream(5);
        let v: Vec<f64> = (0..301).map(|_| 1.3 + 0.4 * rng.sample::<f64, _>(StandardNormal)).collect();
        let s = param_stats(&v, 1.0).unwrap();
        let bias = s.mean - 1.0;
        assert!((s.rmse.powi(2) - (bias * bias + s.std * s.std)).abs() < 1e-9);
    }

    #[test]
    fn gaussian_cloud_rmse() {
        let mut rng = crate::rng::stream(2024);
        let z: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let zs = param_stats(&z, 0.0).unwrap();
        // Rescaled to the exact target moments.
        let v: Vec<f64> = z.iter().map(|x| 2.0927 + 0.6201 * (x - zs.mean) / zs.std).collect();
        let s = param_stats(&v, 2.0).unwrap();
        assert!((s.std - 0.6201).abs() < 1e-12);
        assert!((s.rmse / 0.6269 - 1.0).abs() < 0.03, "rmse {}", s.rmse);
    }

    #[test]
    fn estimates_csv_round_trip() {
        let rows = vec![
            PathEstimate {
                regime: RegimeName::HighVolatility,
                path_idx: 0,
                estimator: Estimator::Mle,
                estimate: Some([0.51234567890123456, 3.9]),
                wall_time_s: 0.0125,
                converged: true,
            },
            PathEstimate {
                regime: RegimeName::HighVolatility,
                path_idx: 1,
                estimator: Estimator::Mle,
                estimate: None,
                wall_time_s: 0.5,
                converged: false,
            },
        ];
        let back = parse_estimates_csv(&estimates_csv(&rows)).unwrap();
        assert_eq!(back, rows);
        let reps = regime_reports_from_estimates(&back).unwrap();
        let mle = reps[0].summary(Estimator::Mle).unwrap();
        assert_eq!((mle.n_succeeded, mle.n_failed), (1, 1));
    }

    #[test]
    fn single_path_benchmark() {
        let cfg = BenchConfig {
            regimes: vec![RegimeName::StrongMeanReversion],
            n_paths: 1,
            seed: 3,
            mle: MleConfig { basin_hops: 0, ..Default::default() },
            ..Default::default()
        };
        let rep = run_benchmark(&cfg, None).unwrap();
        let mle = rep.regimes[0].summary(Estimator::Mle).unwrap();
        let st = mle.stats.unwrap();
        assert_eq!(st.theta.std, 0.0);
        assert_eq!(st.theta.mean, rep.estimates[0].estimate.unwrap()[0]);
        assert_eq!(mle.n_succeeded + mle.n_failed, 1);
    }

    #[test]
    fn markdown_has_a_row_per_estimator() {
        let cfg = BenchConfig {
            regimes: vec![RegimeName::LowVolatility, RegimeName::WeakMeanReversion],
            n_paths: 3,
            grid: GridSpec::new(0.01, 100).unwrap(),
            mle: MleConfig { basin_hops: 0, ..Default::default() },
            ..Default::default()
        };
        let rep = run_benchmark(&cfg, None).unwrap();
        let md = report_markdown(&rep.regimes);
        assert_eq!(md.lines().count(), 4);
        assert!(md.contains("| low_volatility | 0.5 | 0.25 | 0.25 | MLE |"));
        assert_eq!(report_csv(&rep.regimes).lines().count(), 3);
    }
}
