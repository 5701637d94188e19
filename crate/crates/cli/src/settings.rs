//! Resolved per-subcommand settings.
//!
//! Each subcommand starts from its defaults, overlays the keys of the JSON
//! `--config` file, then overlays any flags given on the command line. The
//! result is written back as `effective_config.json`, which is itself a
//! valid `--config` file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use oucal::bench::BenchConfig;
use oucal::mle::MleConfig;
use oucal::neural::{LossConfig, TrainConfig};
use oucal::process::{GridSpec, InitMode};

/// A bad flag, config value or combination; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Loaded `--config` file: the master seed plus subcommand keys.
#[derive(Debug, Default)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub body: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let Value::Object(mut body) = value else {
            return Err(usage(format!("{}: expected a JSON object", path.display())));
        };
        body.remove("command");
        let seed = match body.remove("seed") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                v.as_u64().ok_or_else(|| usage(format!("{}: seed must be a non-negative integer", path.display())))?,
            ),
        };
        Ok(Self { seed, body })
    }

    /// Defaults overlaid with this file's keys.
    pub fn resolve<S: Serialize + DeserializeOwned + Default>(&self) -> anyhow::Result<S> {
        let mut base = serde_json::to_value(S::default())?;
        merge(&mut base, Value::Object(self.body.clone()));
        serde_json::from_value(base).map_err(|e| usage(format!("config: {e}")))
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

#[derive(Serialize)]
struct Effective<'a, S> {
    command: &'a str,
    seed: u64,
    #[serde(flatten)]
    settings: &'a S,
}

pub fn write_effective<S: Serialize>(out: &Path, command: &str, seed: u64, settings: &S) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(&Effective { command, seed, settings })? + "\n";
    fs::write(out.join("effective_config.json"), text).context("writing effective_config.json")?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSettings {
    pub theta: Option<f64>,
    pub sigma_sq: Option<f64>,
    pub grid: GridSpec,
    pub count: usize,
    pub k: f64,
    pub init_mode: InitMode,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            theta: None,
            sigma_sq: None,
            grid: GridSpec::default(),
            count: 1,
            k: 30.0,
            init_mode: InitMode::UniformKSigma,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub input: Option<PathBuf>,
    /// Overrides the spacing read from the files.
    pub dt: Option<f64>,
    pub mle: MleConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmSettings {
    pub input: Option<PathBuf>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    /// Labeled dataset directory (with manifest); simulated from the four
    /// regimes when absent.
    pub data: Option<PathBuf>,
    pub per_regime: usize,
    pub grid: GridSpec,
    pub k: f64,
    pub train: TrainConfig,
    pub loss: LossConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            data: None,
            per_regime: 5000,
            grid: GridSpec::default(),
            k: 30.0,
            train: TrainConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct InferSettings {
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSettings {
    pub bench: BenchConfig,
    /// Pre-trained model; a fresh one is trained when absent and `rnn` is set.
    pub model: Option<PathBuf>,
    pub rnn: bool,
    pub train_per_regime: usize,
    pub train: TrainConfig,
    pub loss: LossConfig,
}

/// Desk-scale network: 500 paths per regime, hidden width 16, 20 epochs.
pub fn desk_train_config() -> TrainConfig {
    TrainConfig { epochs: 20, hidden_size: 16, ..TrainConfig::default() }
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self {
            bench: BenchConfig::default(),
            model: None,
            rnn: true,
            train_per_regime: 500,
            train: desk_train_config(),
            loss: LossConfig::default(),
        }
    }
}
