use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use oucal::bench::{estimates_csv, report_csv, report_json, report_markdown, run_benchmark, timing_rows, RegimeName};
use oucal::io::{fmt_f64, load_paths, write_dataset, LoadedPath};
use oucal::mle::{fit_mle, gmm_initialize, FitReport, MleConfig};
use oucal::neural::{load_model, save_model, train, write_loss_curve, LstmModel, TrainOutput};
use oucal::optimizer::write_trace_csv;
use oucal::process::{simulate_batch, GridSpec, InitMode, OUParams, SimConfig, Trajectory};
use oucal::rng::derive_seed;
use oucal::OuError;

use crate::settings::{
    usage, write_effective, BenchmarkSettings, ConfigFile, FitSettings, GmmSettings, InferSettings, SimulateSettings,
    TrainSettings,
};
use crate::{BenchmarkArgs, Cli, Command, FitArgs, GmmArgs, InferArgs, InitArg, SimulateArgs, TrainArgs};

const FIT_SEED_KEY: u64 = 0x4649_54;

fn invalid(e: OuError) -> anyhow::Error {
    usage(e.to_string())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker pool")?;
    }
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let ctx = Ctx { out: cli.out, seed, verbose: cli.verbose };
    match cli.command {
        Command::Simulate(a) => simulate(&ctx, file.resolve()?, a),
        Command::Fit(a) => fit(&ctx, file.resolve()?, a),
        Command::Gmm(a) => gmm(&ctx, file.resolve()?, a),
        Command::Train(a) => train_cmd(&ctx, file.resolve()?, a),
        Command::Infer(a) => infer_cmd(&ctx, file.resolve()?, a),
        Command::Benchmark(a) => benchmark(&ctx, file.resolve()?, a),
    }
}

struct Ctx {
    out: PathBuf,
    seed: u64,
    verbose: bool,
}

impl Ctx {
    fn create_out(&self) -> anyhow::Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn grid_override(grid: &mut GridSpec, dt: Option<f64>, steps: Option<usize>) {
    if let Some(dt) = dt {
        grid.dt = dt;
    }
    if let Some(n) = steps {
        grid.n_steps = n;
    }
}

fn require_dir(p: &Option<PathBuf>, flag: &str) -> anyhow::Result<PathBuf> {
    p.clone().ok_or_else(|| usage(format!("{flag} is required")))
}

fn file_label(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

fn simulate(ctx: &Ctx, mut s: SimulateSettings, a: SimulateArgs) -> anyhow::Result<()> {
    s.theta = a.theta.or(s.theta);
    s.sigma_sq = a.sigma_sq.or(s.sigma_sq);
    grid_override(&mut s.grid, a.dt, a.steps);
    if let Some(c) = a.count {
        s.count = c;
    }
    if let Some(k) = a.k {
        s.k = k;
    }
    match (a.init, a.x0) {
        (Some(InitArg::Uniform), _) => s.init_mode = InitMode::UniformKSigma,
        (Some(InitArg::Stationary), _) => s.init_mode = InitMode::Stationary,
        (Some(InitArg::Fixed), Some(x0)) => s.init_mode = InitMode::Fixed(x0),
        (Some(InitArg::Fixed), None) => return Err(usage("--init fixed needs --x0")),
        (None, Some(x0)) => s.init_mode = InitMode::Fixed(x0),
        (None, None) => {}
    }

    let theta = s.theta.ok_or_else(|| usage("--theta is required"))?;
    let sigma_sq = s.sigma_sq.ok_or_else(|| usage("--sigma-sq is required"))?;
    let params = OUParams::new(theta, sigma_sq).map_err(invalid)?;
    s.grid.validate().map_err(invalid)?;
    let sim = SimConfig { k: s.k, seed: ctx.seed, init_mode: s.init_mode };
    sim.validate().map_err(invalid)?;
    if s.count == 0 {
        return Err(usage("--count must be >= 1"));
    }

    let data = simulate_batch(&[params], &s.grid, &sim, s.count)?;
    let out = ctx.create_out()?;
    write_dataset(out, &data, &[params], &s.grid, &sim, s.count)?;
    write_effective(out, "simulate", ctx.seed, &s)?;
    println!("wrote {} paths to {}", s.count, out.display());
    Ok(())
}

fn load_input(dir: &Path, dt: Option<f64>) -> anyhow::Result<Vec<LoadedPath>> {
    if let Some(dt) = dt {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(usage(format!("--dt must be > 0, got {dt}")));
        }
    }
    let paths = load_paths(dir, dt).with_context(|| format!("reading {}", dir.display()))?;
    if paths.is_empty() {
        bail!("no trajectory files in {}", dir.display());
    }
    Ok(paths)
}

#[derive(Serialize)]
struct FitRow {
    file: String,
    #[serde(flatten)]
    report: Option<FitReport>,
    error: Option<String>,
}

fn fit(ctx: &Ctx, mut s: FitSettings, a: FitArgs) -> anyhow::Result<()> {
    if a.input.is_some() {
        s.input = a.input;
    }
    s.dt = a.dt.or(s.dt);
    if a.no_basinhop {
        s.mle.basin_hops = 0;
    }
    if let Some(h) = a.hops {
        s.mle.basin_hops = h;
    }
    if let Some(t) = a.tolerance {
        s.mle.grad_tolerance = t;
    }
    if let Some(m) = a.max_iters {
        s.mle.max_bfgs_iters = m;
    }
    s.mle.seed = ctx.seed;
    s.mle.trace = ctx.verbose;
    s.mle.validate().map_err(invalid)?;
    let input = require_dir(&s.input, "--input")?;

    let loaded = load_input(&input, s.dt)?;
    let results: Vec<(String, Option<OUParams>, Result<oucal::mle::EstimationResult, OuError>)> = loaded
        .par_iter()
        .enumerate()
        .map(|(i, lp)| {
            let cfg = MleConfig { seed: derive_seed(s.mle.seed, FIT_SEED_KEY, i as u64), ..s.mle.clone() };
            let res = match &lp.trajectory {
                Ok(t) => fit_mle(t, &cfg),
                Err(e) => Err(OuError::Parse(e.to_string())),
            };
            (file_label(&lp.path), lp.truth, res)
        })
        .collect();

    let out = ctx.create_out()?;
    let mut csv = String::from(
        "file,theta_hat,sigma_sq_hat,loglik,converged,stage,iters,wall_time_s,theta_true,sigma_sq_true,error\n",
    );
    let mut rows = Vec::with_capacity(results.len());
    let mut times = Vec::new();
    if ctx.verbose {
        fs::create_dir_all(out.join("traces"))?;
    }
    for (file, truth, res) in &results {
        let truth_cols = match truth {
            Some(p) => format!("{},{}", fmt_f64(p.theta()), fmt_f64(p.sigma_sq())),
            None => ",".to_string(),
        };
        match res {
            Ok(r) => {
                let rep = FitReport::from(r);
                times.push(rep.wall_time_s);
                csv.push_str(&format!(
                    "{file},{},{},{},{},{},{},{},{truth_cols},\n",
                    fmt_f64(rep.theta_hat),
                    fmt_f64(rep.sigma_sq_hat),
                    fmt_f64(rep.loglik),
                    rep.converged,
                    rep.stage,
                    rep.iters,
                    fmt_f64(rep.wall_time_s)
                ));
                if ctx.verbose {
                    let stem =
                        Path::new(file).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    write_trace_csv(&r.trace, fs::File::create(out.join("traces").join(format!("{stem}.csv")))?)?;
                }
                rows.push(FitRow { file: file.clone(), report: Some(rep), error: None });
            }
            Err(e) => {
                log::warn!("{file}: {e}");
                csv.push_str(&format!("{file},,,,false,,,,{truth_cols},\"{}\"\n", e.to_string().replace('"', "'")));
                rows.push(FitRow { file: file.clone(), report: None, error: Some(e.to_string()) });
            }
        }
    }
    fs::write(out.join("fit.csv"), csv)?;
    fs::write(out.join("fit.json"), serde_json::to_string_pretty(&rows)? + "\n")?;
    write_effective(out, "fit", ctx.seed, &s)?;

    let ok = times.len();
    let mean = if ok > 0 { times.iter().sum::<f64>() / ok as f64 } else { f64::NAN };
    println!("fitted {ok}/{} paths; mean wall time {mean:.6} s", results.len());
    if ok == 0 {
        bail!("every path failed");
    }
    Ok(())
}

fn gmm(ctx: &Ctx, mut s: GmmSettings, a: GmmArgs) -> anyhow::Result<()> {
    if a.input.is_some() {
        s.input = a.input;
    }
    s.dt = a.dt.or(s.dt);
    let input = require_dir(&s.input, "--input")?;
    let loaded = load_input(&input, s.dt)?;
    let out = ctx.create_out()?;
    let mut csv = String::from("file,theta_hat,sigma_sq_hat,rho_hat,rho_clamped,theta_floored,error\n");
    let mut ok = 0;
    for lp in &loaded {
        let file = file_label(&lp.path);
        let res = lp.trajectory.as_ref().map_err(|e| OuError::Parse(e.to_string())).and_then(gmm_initialize);
        match res {
            Ok(g) => {
                ok += 1;
                csv.push_str(&format!(
                    "{file},{},{},{},{},{},\n",
                    fmt_f64(g.theta_hat),
                    fmt_f64(g.sigma_sq_hat),
                    fmt_f64(g.rho_hat),
                    g.rho_clamped,
                    g.theta_floored
                ));
            }
            Err(e) => csv.push_str(&format!("{file},,,,,,\"{}\"\n", e.to_string().replace('"', "'"))),
        }
    }
    fs::write(out.join("gmm.csv"), csv)?;
    write_effective(out, "gmm", ctx.seed, &s)?;
    println!("initialized {ok}/{} paths", loaded.len());
    if ok == 0 {
        bail!("every path failed");
    }
    Ok(())
}

fn save_training(out: &Path, result: &TrainOutput) -> anyhow::Result<()> {
    save_model(&result.model, &out.join("model.bin"))?;
    write_loss_curve(&result.curve, fs::File::create(out.join("loss_curve.csv"))?)?;
    Ok(())
}

fn train_cmd(ctx: &Ctx, mut s: TrainSettings, a: TrainArgs) -> anyhow::Result<()> {
    if a.data.is_some() {
        s.data = a.data;
    }
    if let Some(n) = a.per_regime {
        s.per_regime = n;
    }
    if let Some(e) = a.epochs {
        s.train.epochs = e;
    }
    if let Some(b) = a.batch_size {
        s.train.batch_size = b;
    }
    if let Some(lr) = a.lr {
        s.train.learning_rate = lr;
    }
    if let Some(h) = a.hidden {
        s.train.hidden_size = h;
    }
    if let Some(f) = a.split {
        s.train.split_fraction = f;
    }
    grid_override(&mut s.grid, a.dt, a.steps);
    s.train.seed = ctx.seed;
    s.train.validate().map_err(invalid)?;
    s.loss.validate().map_err(invalid)?;
    s.grid.validate().map_err(invalid)?;

    let dataset: Vec<(Trajectory, OUParams)> = match &s.data {
        Some(dir) => {
            let mut ds = Vec::new();
            for lp in load_input(dir, None)? {
                let label = lp
                    .truth
                    .ok_or_else(|| anyhow::anyhow!("{}: no label (dataset needs a manifest)", lp.path.display()))?;
                let t = lp.trajectory.with_context(|| format!("loading {}", lp.path.display()))?;
                ds.push((t, label));
            }
            ds
        }
        None => {
            if s.per_regime == 0 {
                return Err(usage("--per-regime must be >= 1"));
            }
            let bench = oucal::bench::BenchConfig { grid: s.grid, k: s.k, seed: ctx.seed, ..Default::default() };
            bench.training_set(s.per_regime)?
        }
    };
    info!("training on {} paths", dataset.len());
    let clock = Instant::now();
    let result = train(&dataset, &s.train, &s.loss)?;
    let out = ctx.create_out()?;
    save_training(out, &result)?;
    write_effective(out, "train", ctx.seed, &s)?;
    let last = result.curve.last();
    println!(
        "trained on {} / validated on {} paths in {:.1} s; final train loss {:.6}, val loss {:.6}",
        result.n_train,
        result.n_val,
        clock.elapsed().as_secs_f64(),
        last.map_or(f64::NAN, |e| e.train_loss),
        last.map_or(f64::NAN, |e| e.val_loss)
    );
    Ok(())
}

fn read_model(path: &Path) -> anyhow::Result<LstmModel> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn infer_cmd(ctx: &Ctx, mut s: InferSettings, a: InferArgs) -> anyhow::Result<()> {
    if a.model.is_some() {
        s.model = a.model;
    }
    if a.input.is_some() {
        s.input = a.input;
    }
    s.dt = a.dt.or(s.dt);
    let model_path = require_dir(&s.model, "--model")?;
    let input = require_dir(&s.input, "--input")?;
    let model = read_model(&model_path)?;
    let loaded = load_input(&input, s.dt)?;
    let preds: Vec<Result<[f64; 2], OuError>> = loaded
        .par_iter()
        .map(|lp| match &lp.trajectory {
            Ok(t) => model.predict(t.values()),
            Err(e) => Err(OuError::Parse(e.to_string())),
        })
        .collect();

    let out = ctx.create_out()?;
    let mut csv = String::from("file,theta_hat,sigma_sq_hat,error\n");
    let mut ok = 0;
    for (lp, p) in loaded.iter().zip(&preds) {
        let file = file_label(&lp.path);
        match p {
            Ok([th, s2]) => {
                ok += 1;
                csv.push_str(&format!("{file},{},{},\n", fmt_f64(*th), fmt_f64(*s2)));
            }
            Err(e) => {
                log::warn!("{file}: {e}");
                csv.push_str(&format!("{file},,,\"{}\"\n", e.to_string().replace('"', "'")));
            }
        }
    }
    fs::write(out.join("estimates.csv"), csv)?;
    write_effective(out, "infer", ctx.seed, &s)?;
    println!("estimated {ok}/{} paths", loaded.len());
    if ok == 0 {
        let first = preds.into_iter().find_map(|p| p.err()).map(|e| e.to_string()).unwrap_or_default();
        bail!("every path failed: {first}");
    }
    Ok(())
}

fn benchmark(ctx: &Ctx, mut s: BenchmarkSettings, a: BenchmarkArgs) -> anyhow::Result<()> {
    if let Some(n) = a.paths {
        s.bench.n_paths = n;
    }
    grid_override(&mut s.bench.grid, a.dt, a.steps);
    if let Some(k) = a.k {
        s.bench.k = k;
    }
    if let Some(names) = &a.regimes {
        s.bench.regimes = names
            .iter()
            .map(|n| RegimeName::parse(n.trim()).ok_or_else(|| usage(format!("unknown regime `{n}`"))))
            .collect::<anyhow::Result<_>>()?;
    }
    if a.model.is_some() {
        s.model = a.model;
    }
    if a.no_rnn {
        s.rnn = false;
    }
    if a.no_basinhop {
        s.bench.mle.basin_hops = 0;
    }
    if let Some(n) = a.train_per_regime {
        s.train_per_regime = n;
    }
    if let Some(e) = a.epochs {
        s.train.epochs = e;
    }
    if let Some(h) = a.hidden {
        s.train.hidden_size = h;
    }
    s.bench.seed = ctx.seed;
    s.bench.mle.seed = ctx.seed;
    s.train.seed = ctx.seed;
    if s.bench.n_paths == 0 {
        return Err(usage("--paths must be >= 1"));
    }
    if s.bench.regimes.is_empty() {
        return Err(usage("no regimes selected"));
    }
    s.bench.grid.validate().map_err(invalid)?;
    s.bench.sim_config().validate().map_err(invalid)?;
    s.bench.mle.validate().map_err(invalid)?;
    s.train.validate().map_err(invalid)?;
    s.loss.validate().map_err(invalid)?;

    let out = ctx.create_out()?;
    let model = match (&s.model, s.rnn) {
        (_, false) => None,
        (Some(p), true) => Some(read_model(p)?),
        (None, true) => {
            if s.train_per_regime == 0 {
                return Err(usage("--train-per-regime must be >= 1"));
            }
            info!("training a model on {} paths per regime", s.train_per_regime);
            let corpus = s.bench.training_set(s.train_per_regime)?;
            let result = train(&corpus, &s.train, &s.loss)?;
            save_training(out, &result)?;
            Some(result.model)
        }
    };
    if let Some(m) = &model {
        if m.seq_len != s.bench.grid.n_steps + 1 {
            return Err(OuError::DimensionMismatch { expected: m.seq_len, got: s.bench.grid.n_steps + 1 })
                .context("model sequence length does not match the benchmark grid");
        }
    }

    let report = run_benchmark(&s.bench, model.as_ref())?;
    let md = report_markdown(&report.regimes);
    fs::write(out.join("report.md"), &md)?;
    fs::write(out.join("report.csv"), report_csv(&report.regimes))?;
    fs::write(out.join("report.json"), report_json(&report)?)?;
    fs::write(out.join("estimates.csv"), estimates_csv(&report.estimates))?;
    fs::write(out.join("timing.json"), serde_json::to_string_pretty(&timing_rows(&report.regimes))? + "\n")?;
    write_effective(out, "benchmark", ctx.seed, &s)?;
    print!("{md}");
    for t in timing_rows(&report.regimes) {
        println!(
            "{} {}: {:.3} s total, {:.6} s per path",
            t.regime.as_str(),
            t.estimator.as_str(),
            t.wall_time_total_s,
            t.wall_time_mean_s
        );
    }
    Ok(())
}
