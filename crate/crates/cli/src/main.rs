use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod settings;

use settings::Usage;

#[derive(Parser, Debug)]
#[command(name = "oucal", version, about = "Ornstein-Uhlenbeck parameter estimation: simulation, MLE and LSTM")]
#[command(allow_negative_numbers = true)]
pub struct Cli {
    /// Master seed for every random stream of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// JSON settings file; flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Info-level logging, plus per-path optimizer traces from `fit`.
    #[arg(long, short, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate exact OU paths to CSV files plus a manifest.
    Simulate(SimulateArgs),
    /// Maximum-likelihood fit of every path in a directory.
    Fit(FitArgs),
    /// Moment-based initial estimates only.
    Gmm(GmmArgs),
    /// Train the LSTM estimator.
    Train(TrainArgs),
    /// Apply a trained model to every path in a directory.
    Infer(InferArgs),
    /// Compare MLE and the network on the four reference regimes.
    Benchmark(BenchmarkArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum InitArg {
    /// Uniform on ±k·σ.
    Uniform,
    Stationary,
    Fixed,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub sigma_sq: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Paths to simulate.
    #[arg(long)]
    pub count: Option<usize>,
    /// Half-width multiple for the uniform initial law.
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Starting value for `--init fixed`.
    #[arg(long)]
    pub x0: Option<f64>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct FitArgs {
    /// Directory of `t,x` CSV files.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Skip the basin-hopping stage.
    #[arg(long)]
    pub no_basinhop: bool,
    #[arg(long)]
    pub hops: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct GmmArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct TrainArgs {
    /// Labeled dataset directory written by `simulate`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Paths per regime when simulating the corpus.
    #[arg(long)]
    pub per_regime: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct InferArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct BenchmarkArgs {
    /// Inference paths per regime.
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub k: Option<f64>,
    /// Comma-separated subset of regimes.
    #[arg(long, value_delimiter = ',')]
    pub regimes: Option<Vec<String>>,
    /// Pre-trained model; otherwise a desk-scale model is trained first.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// MLE only.
    #[arg(long)]
    pub no_rnn: bool,
    #[arg(long)]
    pub no_basinhop: bool,
    /// Training paths per regime for the fresh model.
    #[arg(long)]
    pub train_per_regime: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.downcast_ref::<Usage>().is_some() { 2 } else { 1 };
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
