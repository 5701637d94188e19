//! Two-layer LSTM regressor: gate recurrences, ELU, linear head, and
//! backpropagation through time.
//!
//! Gate pre-activations are stacked in the order input, forget, cell, output
//! (`4·hidden` rows), as in
//!
//! ```text
//! i_t = σ(W_ii x_t + b_ii + W_hi h_{t-1} + b_hi)
//! f_t = σ(W_if x_t + b_if + W_hf h_{t-1} + b_hf)
//! g_t = tanh(W_ig x_t + b_ig + W_hg h_{t-1} + b_hg)
//! o_t = σ(W_io x_t + b_io + W_ho h_{t-1} + b_ho)
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ g_t
//! h_t = o_t ⊙ tanh(c_t)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{elu, elu_grad};
use crate::error::{OuError, Result};
use crate::rng::stream;

pub const N_LAYERS: usize = 2;
pub const N_OUTPUTS: usize = 2;

/// Weights of one LSTM layer. Matrices are row-major with `4·hidden` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub input_size: usize,
    pub hidden_size: usize,
    /// `4H × input_size`
    pub w_ih: Vec<f64>,
    /// `4H × H`
    pub w_hh: Vec<f64>,
    pub b_ih: Vec<f64>,
    pub b_hh: Vec<f64>,
}

impl LayerWeights {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let g = 4 * hidden_size;
        Self {
            input_size,
            hidden_size,
            w_ih: vec![0.0; g * input_size],
            w_hh: vec![0.0; g * hidden_size],
            b_ih: vec![0.0; g],
            b_hh: vec![0.0; g],
        }
    }

    fn shape_ok(&self) -> bool {
        let g = 4 * self.hidden_size;
        self.w_ih.len() == g * self.input_size
            && self.w_hh.len() == g * self.hidden_size
            && self.b_ih.len() == g
            && self.b_hh.len() == g
    }
}

/// Every trainable tensor of the network. Also used for gradients and
/// optimizer moments, which share the shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub layers: Vec<LayerWeights>,
    /// `2 × H`
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl Weights {
    pub fn zeros(hidden_size: usize) -> Self {
        Self {
            layers: vec![LayerWeights::zeros(1, hidden_size), LayerWeights::zeros(hidden_size, hidden_size)],
            head_w: vec![0.0; N_OUTPUTS * hidden_size],
            head_b: vec![0.0; N_OUTPUTS],
        }
    }

    /// Uniform `[-1/√H, 1/√H]` for every entry.
    pub fn random(hidden_size: usize, seed: u64) -> Self {
        let mut w = Self::zeros(hidden_size);
        let bound = 1.0 / (hidden_size as f64).sqrt();
        let mut rng = stream(seed);
        for t in w.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        w
    }

    pub fn hidden_size(&self) -> usize {
        self.layers[0].hidden_size
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.hidden_size())
    }

    /// Tensors in serialization order: per layer `w_ih, w_hh, b_ih, b_hh`,
    /// then `head_w, head_b`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(4 * N_LAYERS + 2);
        for l in &self.layers {
            out.extend([l.w_ih.as_slice(), l.w_hh.as_slice(), l.b_ih.as_slice(), l.b_hh.as_slice()]);
        }
        out.push(&self.head_w);
        out.push(&self.head_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(4 * N_LAYERS + 2);
        for l in &mut self.layers {
            out.push(&mut l.w_ih);
            out.push(&mut l.w_hh);
            out.push(&mut l.b_ih);
            out.push(&mut l.b_hh);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    /// `(rows, cols)` of each tensor in [`Weights::tensors`] order; vectors
    /// have `cols = 0`.
    pub fn tensor_shapes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for l in &self.layers {
            let g = 4 * l.hidden_size;
            out.extend([(g, l.input_size), (g, l.hidden_size), (g, 0), (g, 0)]);
        }
        out.push((N_OUTPUTS, self.hidden_size()));
        out.push((N_OUTPUTS, 0));
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Weights) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= c;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn validate(&self) -> Result<()> {
        let h = self.hidden_size();
        if h == 0 {
            return Err(OuError::InvalidConfig("hidden_size must be >= 1".into()));
        }
        let ok = self.layers.len() == N_LAYERS
            && self.layers[0].input_size == 1
            && self.layers[1].input_size == h
            && self.layers.iter().all(|l| l.hidden_size == h && l.shape_ok())
            && self.head_w.len() == N_OUTPUTS * h
            && self.head_b.len() == N_OUTPUTS;
        if ok {
            Ok(())
        } else {
            Err(OuError::CacheMismatch("inconsistent weight shapes".into()))
        }
    }
}

/// Corpus-level affine input transform `(x - shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub shift: f64,
    pub scale: f64,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self { shift: 0.0, scale: 1.0 }
    }
}

impl Normalizer {
    /// Mean and population standard deviation over every value of every
    /// sequence; a zero spread falls back to scale 1.
    pub fn fit<'a, I>(sequences: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]> + Clone,
    {
        let mut n = 0usize;
        let mut sum = 0.0;
        for s in sequences.clone() {
            n += s.len();
            sum += s.iter().sum::<f64>();
        }
        if n == 0 {
            return Self::default();
        }
        let mean = sum / n as f64;
        let ss: f64 = sequences.into_iter().flat_map(|s| s.iter()).map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / n as f64).sqrt();
        Self { shift: mean, scale: if sd > 0.0 && sd.is_finite() { sd } else { 1.0 } }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| (v - self.shift) / self.scale).collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| v * self.scale + self.shift).collect()
    }
}

/// A trained (or freshly initialized) regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub weights: Weights,
    pub elu_alpha: f64,
    pub normalizer: Normalizer,
    /// Number of observations per input path the model was trained on.
    pub seq_len: usize,
}

impl LstmModel {
    pub fn new(weights: Weights, elu_alpha: f64, normalizer: Normalizer, seq_len: usize) -> Result<Self> {
        weights.validate()?;
        if !(elu_alpha > 0.0) {
            return Err(OuError::InvalidConfig(format!("elu alpha must be > 0, got {elu_alpha}")));
        }
        if !(normalizer.scale > 0.0 && normalizer.scale.is_finite() && normalizer.shift.is_finite()) {
            return Err(OuError::InvalidConfig("normalizer must have finite shift and positive scale".into()));
        }
        Ok(Self { weights, elu_alpha, normalizer, seq_len })
    }

    pub fn hidden_size(&self) -> usize {
        self.weights.hidden_size()
    }

    /// Forward pass on a raw path: normalize, run, return `[θ̂, σ̂²]`.
    pub fn predict(&self, raw: &[f64]) -> Result<[f64; 2]> {
        if raw.len() != self.seq_len {
            return Err(OuError::DimensionMismatch { expected: self.seq_len, got: raw.len() });
        }
        Ok(lstm_forward(self, &self.normalizer.normalize(raw))?.pred)
    }
}

/// Hidden and cell state of every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![vec![0.0; hidden]; N_LAYERS], c: vec![vec![0.0; hidden]; N_LAYERS] }
    }
}

/// Per-step activations of one layer.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// `T × 4H` post-activation gates `[i, f, g, o]`.
    pub gates: Vec<f64>,
    /// `(T+1) × H`, row 0 is the initial zero state.
    pub c: Vec<f64>,
    /// `(T+1) × H`, row 0 is the initial zero state.
    pub h: Vec<f64>,
    /// `T × H`
    pub tanh_c: Vec<f64>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub seq_len: usize,
    pub hidden_size: usize,
    /// Normalized input sequence.
    pub input: Vec<f64>,
    pub layers: Vec<LayerCache>,
    pub elu_out: Vec<f64>,
    pub pred: [f64; 2],
}

impl ForwardCache {
    pub fn final_state(&self) -> LstmState {
        let hd = self.hidden_size;
        let t = self.seq_len;
        LstmState {
            h: self.layers.iter().map(|l| l.h[t * hd..(t + 1) * hd].to_vec()).collect(),
            c: self.layers.iter().map(|l| l.c[t * hd..(t + 1) * hd].to_vec()).collect(),
        }
    }

    fn top_h(&self) -> &[f64] {
        let hd = self.hidden_size;
        &self.layers[N_LAYERS - 1].h[self.seq_len * hd..(self.seq_len + 1) * hd]
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Runs one layer over `seq_len` steps; `inputs` is `T × input_size`.
fn layer_forward(w: &LayerWeights, inputs: &[f64], seq_len: usize) -> LayerCache {
    let hd = w.hidden_size;
    let g4 = 4 * hd;
    let isz = w.input_size;
    let mut cache = LayerCache {
        gates: vec![0.0; seq_len * g4],
        c: vec![0.0; (seq_len + 1) * hd],
        h: vec![0.0; (seq_len + 1) * hd],
        tanh_c: vec![0.0; seq_len * hd],
    };
    let bias: Vec<f64> = w.b_ih.iter().zip(&w.b_hh).map(|(a, b)| a + b).collect();
    let mut z = vec![0.0; g4];
    for t in 0..seq_len {
        let x = &inputs[t * isz..(t + 1) * isz];
        let h_prev = &cache.h[t * hd..(t + 1) * hd];
        for (((zr, b), wi), wh) in z.iter_mut().zip(&bias).zip(w.w_ih.chunks_exact(isz)).zip(w.w_hh.chunks_exact(hd)) {
            let mut acc = *b;
            for (a, v) in wi.iter().zip(x) {
                acc += a * v;
            }
            for (a, v) in wh.iter().zip(h_prev) {
                acc += a * v;
            }
            *zr = acc;
        }
        let gates = &mut cache.gates[t * g4..(t + 1) * g4];
        for j in 0..hd {
            gates[j] = sigmoid(z[j]);
            gates[hd + j] = sigmoid(z[hd + j]);
            gates[2 * hd + j] = z[2 * hd + j].tanh();
            gates[3 * hd + j] = sigmoid(z[3 * hd + j]);
        }
        let (c_prev_part, c_next_part) = cache.c.split_at_mut((t + 1) * hd);
        let c_prev = &c_prev_part[t * hd..];
        let c_new = &mut c_next_part[..hd];
        let h_new = &mut cache.h[(t + 1) * hd..(t + 2) * hd];
        let tc = &mut cache.tanh_c[t * hd..(t + 1) * hd];
        for j in 0..hd {
            let c = gates[hd + j] * c_prev[j] + gates[j] * gates[2 * hd + j];
            c_new[j] = c;
            tc[j] = c.tanh();
            h_new[j] = gates[3 * hd + j] * tc[j];
        }
    }
    cache
}

/// Forward pass on an already normalized sequence.
pub fn lstm_forward(model: &LstmModel, path: &[f64]) -> Result<ForwardCache> {
    let seq_len = path.len();
    if seq_len == 0 {
        return Err(OuError::DimensionMismatch { expected: model.seq_len.max(1), got: 0 });
    }
    let hd = model.hidden_size();
    let l0 = layer_forward(&model.weights.layers[0], path, seq_len);
    let l1 = layer_forward(&model.weights.layers[1], &l0.h[hd..], seq_len);
    let top = &l1.h[seq_len * hd..];
    let elu_out: Vec<f64> = top.iter().map(|v| elu(*v, model.elu_alpha)).collect();
    let mut pred = [0.0; N_OUTPUTS];
    for (k, p) in pred.iter_mut().enumerate() {
        *p = model.weights.head_b[k]
            + model.weights.head_w[k * hd..(k + 1) * hd].iter().zip(&elu_out).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(ForwardCache { seq_len, hidden_size: hd, input: path.to_vec(), layers: vec![l0, l1], elu_out, pred })
}

/// Reverse accumulation through one layer. `dh_ext` is `T × H` gradient
/// arriving at each `h_t` from outside the recurrence. Returns input
/// gradients (`T × input_size`) when `want_input_grad`.
fn layer_backward(
    w: &LayerWeights,
    cache: &LayerCache,
    inputs: &[f64],
    seq_len: usize,
    dh_ext: &[f64],
    grad: &mut LayerWeights,
    want_input_grad: bool,
) -> Vec<f64> {
    let hd = w.hidden_size;
    let g4 = 4 * hd;
    let isz = w.input_size;
    let mut dx = if want_input_grad { vec![0.0; seq_len * isz] } else { Vec::new() };
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let mut dz = vec![0.0; g4];
    for t in (0..seq_len).rev() {
        let gates = &cache.gates[t * g4..(t + 1) * g4];
        let c_prev = &cache.c[t * hd..(t + 1) * hd];
        let tc = &cache.tanh_c[t * hd..(t + 1) * hd];
        for j in 0..hd {
            let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            let dh = dh_next[j] + dh_ext[t * hd + j];
            let dc = dc_next[j] + dh * o * (1.0 - tc[j] * tc[j]);
            dz[j] = dc * g * i * (1.0 - i);
            dz[hd + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * hd + j] = dc * i * (1.0 - g * g);
            dz[3 * hd + j] = dh * tc[j] * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        let x = &inputs[t * isz..(t + 1) * isz];
        let h_prev = &cache.h[t * hd..(t + 1) * hd];
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for (r, &d) in dz.iter().enumerate() {
            grad.b_ih[r] += d;
            grad.b_hh[r] += d;
            for (g, v) in grad.w_ih[r * isz..(r + 1) * isz].iter_mut().zip(x) {
                *g += d * v;
            }
            for (g, v) in grad.w_hh[r * hd..(r + 1) * hd].iter_mut().zip(h_prev) {
                *g += d * v;
            }
            for (acc, wv) in dh_next.iter_mut().zip(&w.w_hh[r * hd..(r + 1) * hd]) {
                *acc += d * wv;
            }
            if want_input_grad {
                for (acc, wv) in dx[t * isz..(t + 1) * isz].iter_mut().zip(&w.w_ih[r * isz..(r + 1) * isz]) {
                    *acc += d * wv;
                }
            }
        }
    }
    dx
}

/// Gradients of a scalar loss with respect to every weight, given
/// `∂loss/∂[θ̂, σ̂²]` for the forward pass recorded in `cache`.
pub fn lstm_backward(model: &LstmModel, cache: &ForwardCache, d_pred: [f64; 2]) -> Result<Weights> {
    let hd = model.hidden_size();
    let t_len = cache.seq_len;
    let shapes_ok = cache.hidden_size == hd
        && cache.input.len() == t_len
        && cache.layers.len() == N_LAYERS
        && cache.elu_out.len() == hd
        && cache.layers.iter().all(|l| {
            l.gates.len() == t_len * 4 * hd
                && l.c.len() == (t_len + 1) * hd
                && l.h.len() == (t_len + 1) * hd
                && l.tanh_c.len() == t_len * hd
        });
    if !shapes_ok {
        return Err(OuError::CacheMismatch(format!(
            "cache for hidden={} T={} does not fit model hidden={}",
            cache.hidden_size, t_len, hd
        )));
    }
    let mut grad = model.weights.zeros_like();
    let top = cache.top_h();
    let mut d_top = vec![0.0; hd];
    for k in 0..N_OUTPUTS {
        grad.head_b[k] += d_pred[k];
        for j in 0..hd {
            grad.head_w[k * hd + j] += d_pred[k] * cache.elu_out[j];
            d_top[j] += d_pred[k] * model.weights.head_w[k * hd + j];
        }
    }
    for j in 0..hd {
        d_top[j] *= elu_grad(top[j], model.elu_alpha);
    }

    let mut dh_ext = vec![0.0; t_len * hd];
    dh_ext[(t_len - 1) * hd..].copy_from_slice(&d_top);
    let (g0, g1) = grad.layers.split_at_mut(1);
    let d_mid = layer_backward(
        &model.weights.layers[1],
        &cache.layers[1],
        &cache.layers[0].h[hd..],
        t_len,
        &dh_ext,
        &mut g1[0],
        true,
    );
    layer_backward(&model.weights.layers[0], &cache.layers[0], &cache.input, t_len, &d_mid, &mut g0[0], false);
    Ok(grad)
}
