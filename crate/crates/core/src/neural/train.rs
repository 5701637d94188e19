//! Minibatch training and batched inference.

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamHyper, AdamState};
use super::loss::{composite_loss, composite_loss_grad, LossConfig};
use super::lstm::{lstm_backward, lstm_forward, LstmModel, Normalizer, Weights};
use crate::error::{OuError, Result};
use crate::process::{OUParams, Trajectory};
use crate::rng::{derive_seed, stream};

const SPLIT_KEY: u64 = 0x5350_4c49_54;
const INIT_KEY: u64 = 0x494e_4954;
const SHUFFLE_KEY: u64 = 0x5348_5546;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of the dataset used for training; the rest is validation.
    pub split_fraction: f64,
    pub adam: AdamHyper,
    pub seed: u64,
    pub hidden_size: usize,
    pub elu_alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            split_fraction: 0.8,
            adam: AdamHyper::default(),
            seed: 0,
            hidden_size: 32,
            elu_alpha: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(OuError::InvalidConfig(format!(
                "split_fraction must be in (0, 1), got {}",
                self.split_fraction
            )));
        }
        if self.batch_size == 0 {
            return Err(OuError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.hidden_size == 0 {
            return Err(OuError::InvalidConfig("hidden_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(OuError::InvalidConfig("learning_rate must be finite and >= 0".into()));
        }
        if !(self.elu_alpha > 0.0) {
            return Err(OuError::InvalidConfig("elu_alpha must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    /// NaN when the validation split is empty.
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: LstmModel,
    pub curve: Vec<EpochLoss>,
    pub n_train: usize,
    pub n_val: usize,
}

/// Number of training examples for a dataset of size `n`.
pub fn split_sizes(n: usize, fraction: f64) -> (usize, usize) {
    let n_train = ((n as f64 * fraction).round() as usize).clamp(1.min(n), n);
    (n_train, n - n_train)
}

fn target(p: &OUParams) -> [f64; 2] {
    [p.theta(), p.sigma_sq()]
}

/// Mean loss and summed-then-averaged gradient over `batch` (indices into
/// `inputs`). Per-example work may run in parallel; the reduction is in
/// batch order.
fn batch_gradient(
    model: &LstmModel,
    inputs: &[Vec<f64>],
    targets: &[[f64; 2]],
    batch: &[usize],
    loss: &LossConfig,
) -> (Vec<f64>, Weights) {
    let scale = 1.0 / batch.len() as f64;
    let per_example: Vec<(f64, Weights)> = batch
        .par_iter()
        .map(|&i| {
            let cache = lstm_forward(model, &inputs[i]).expect("non-empty input");
            let l = composite_loss(cache.pred, targets[i], loss);
            let d = composite_loss_grad(cache.pred, targets[i], loss);
            let g = lstm_backward(model, &cache, [d[0] * scale, d[1] * scale]).expect("cache from same model");
            (l, g)
        })
        .collect();
    let mut grad = model.weights.zeros_like();
    let mut losses = Vec::with_capacity(batch.len());
    for (l, g) in &per_example {
        losses.push(*l);
        grad.add_assign(g);
    }
    (losses, grad)
}

fn mean_loss(model: &LstmModel, inputs: &[Vec<f64>], targets: &[[f64; 2]], idx: &[usize], loss: &LossConfig) -> f64 {
    if idx.is_empty() {
        return f64::NAN;
    }
    let losses: Vec<f64> = idx
        .par_iter()
        .map(|&i| composite_loss(lstm_forward(model, &inputs[i]).expect("non-empty input").pred, targets[i], loss))
        .collect();
    losses.iter().sum::<f64>() / idx.len() as f64
}

/// Trains a fresh model on labeled paths.
///
/// The dataset is shuffled once with a seeded generator and split; the input
/// normalizer is fitted on the training part only. Each epoch reshuffles the
/// training part, runs minibatch Adam, and records the mean training loss
/// over the epoch's batches together with the validation loss at the end of
/// the epoch.
pub fn train(dataset: &[(Trajectory, OUParams)], config: &TrainConfig, loss: &LossConfig) -> Result<TrainOutput> {
    config.validate()?;
    loss.validate()?;
    if dataset.is_empty() {
        return Err(OuError::EmptyDataset);
    }
    let seq_len = dataset[0].0.len();
    if let Some((t, _)) = dataset.iter().find(|(t, _)| t.len() != seq_len) {
        return Err(OuError::DimensionMismatch { expected: seq_len, got: t.len() });
    }

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut stream(derive_seed(config.seed, SPLIT_KEY, 0)));
    let (n_train, n_val) = split_sizes(dataset.len(), config.split_fraction);
    let (train_idx, val_idx) = order.split_at(n_train);
    let mut train_idx = train_idx.to_vec();
    let val_idx = val_idx.to_vec();

    let normalizer = Normalizer::fit(train_idx.iter().map(|&i| dataset[i].0.values()).collect::<Vec<_>>());
    let inputs: Vec<Vec<f64>> = dataset.iter().map(|(t, _)| normalizer.normalize(t.values())).collect();
    let targets: Vec<[f64; 2]> = dataset.iter().map(|(_, p)| target(p)).collect();

    let weights = Weights::random(config.hidden_size, derive_seed(config.seed, INIT_KEY, 0));
    let mut model = LstmModel::new(weights, config.elu_alpha, normalizer, seq_len)?;
    let mut adam = AdamState::new(&model.weights);
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        train_idx.shuffle(&mut stream(derive_seed(config.seed, SHUFFLE_KEY, epoch as u64)));
        let mut epoch_losses = Vec::with_capacity(n_train);
        for batch in train_idx.chunks(config.batch_size) {
            let (losses, grad) = batch_gradient(&model, &inputs, &targets, batch, loss);
            epoch_losses.extend(losses);
            adam_step(&mut model.weights, &grad, &mut adam, config.learning_rate, &config.adam);
        }
        if !model.weights.is_finite() {
            return Err(OuError::OptimizationFailed(format!("weights diverged in epoch {epoch}")));
        }
        let train_loss = epoch_losses.iter().sum::<f64>() / epoch_losses.len() as f64;
        let val_loss = mean_loss(&model, &inputs, &targets, &val_idx, loss);
        info!("epoch {epoch:>3}: train {train_loss:.6} val {val_loss:.6}");
        curve.push(EpochLoss { epoch, train_loss, val_loss });
    }

    Ok(TrainOutput { model, curve, n_train, n_val })
}

/// Forward-only estimates `[θ̂, σ̂²]` for each path, in input order.
pub fn infer(model: &LstmModel, trajectories: &[Trajectory]) -> Result<Vec<[f64; 2]>> {
    if let Some(t) = trajectories.iter().find(|t| t.len() != model.seq_len) {
        return Err(OuError::DimensionMismatch { expected: model.seq_len, got: t.len() });
    }
    trajectories.par_iter().map(|t| model.predict(t.values())).collect()
}

/// Writes `epoch,train_loss,val_loss`.
pub fn write_loss_curve<W: std::io::Write>(curve: &[EpochLoss], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["epoch", "train_loss", "val_loss"])?;
    for e in curve {
        wr.write_record([e.epoch.to_string(), format!("{:.17e}", e.train_loss), format!("{:.17e}", e.val_loss)])?;
    }
    wr.flush()?;
    Ok(())
}
