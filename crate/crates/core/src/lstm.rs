//! Stacked LSTM regressor mapping a 14-day window to the 7-day target vector.
//!
//! Layers run time-major over the batch so each step is one GEMM per layer.
//! Gradients come from hand-written backpropagation through time and are
//! checked against central differences in the tests.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{StandardizationParams, WindowSample};
use crate::linalg::{gemm_slice, Mat, Trans};
use crate::math::{pow, sigmoid, sqrt, tanh};
use crate::rng::{mix, stream};
use crate::{HORIZON, INPUT_DAYS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmConfig {
    pub hidden_size: usize,
    pub n_layers: usize,
    pub dropout_p: f64,
    pub dense_units: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Initial forget-gate bias.
    pub forget_bias: f64,
    /// Global gradient-norm clip; zero disables clipping.
    pub clip_norm: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden_size: 32,
            n_layers: 2,
            dropout_p: 0.2,
            dense_units: 128,
            learning_rate: 0.01,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            forget_bias: 1.0,
            clip_norm: 5.0,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("n_layers", self.n_layers),
            ("dense_units", self.dense_units),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("lstm {name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config(format!("lstm dropout_p = {} outside [0, 1)", self.dropout_p)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("lstm learning_rate must be positive"));
        }
        if !(self.clip_norm >= 0.0) || !self.forget_bias.is_finite() {
            return Err(Error::config("lstm clip_norm must be non-negative and forget_bias finite"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config("lstm validation_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// One recurrent layer. Gate rows are stacked as input, forget, cell
/// candidate, output, each `hidden` rows tall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    /// `4H × input`.
    pub w_ih: Mat,
    /// `4H × H`.
    pub w_hh: Mat,
    pub bias: Vec<f64>,
}

/// Fully connected layer, `w` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Mat,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub n_features: usize,
    pub hidden_size: usize,
    pub layers: Vec<LstmLayer>,
    pub dense: Dense,
    pub head: Dense,
}

impl LstmParams {
    pub fn zeros(n_features: usize, cfg: &LstmConfig) -> Self {
        let h = cfg.hidden_size;
        let layers = (0..cfg.n_layers)
            .map(|l| {
                let input = if l == 0 { n_features } else { h };
                LstmLayer { w_ih: Mat::zeros(4 * h, input), w_hh: Mat::zeros(4 * h, h), bias: vec![0.0; 4 * h] }
            })
            .collect();
        Self {
            n_features,
            hidden_size: h,
            layers,
            dense: Dense { w: Mat::zeros(cfg.dense_units, h), b: vec![0.0; cfg.dense_units] },
            head: Dense { w: Mat::zeros(HORIZON, cfg.dense_units), b: vec![0.0; HORIZON] },
        }
    }

    /// Uniform `±1/sqrt(hidden)` weights, zero biases except the forget gate.
    pub fn init(n_features: usize, cfg: &LstmConfig) -> Self {
        let mut p = Self::zeros(n_features, cfg);
        let bound = 1.0 / sqrt(cfg.hidden_size as f64);
        let mut rng = stream(cfg.seed, mix(0x4c53_544d, 0));
        let mut fill = |m: &mut Mat| m.data.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
        for layer in &mut p.layers {
            fill(&mut layer.w_ih);
            fill(&mut layer.w_hh);
            let h = cfg.hidden_size;
            layer.bias[h..2 * h].iter_mut().for_each(|v| *v = cfg.forget_bias);
        }
        fill(&mut p.dense.w);
        fill(&mut p.head.w);
        p
    }

    /// Named parameter blocks in a fixed order.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w_ih"), &layer.w_ih.data[..]));
            out.push((format!("layer{l}.w_hh"), &layer.w_hh.data[..]));
            out.push((format!("layer{l}.bias"), &layer.bias[..]));
        }
        out.push(("dense.w".into(), &self.dense.w.data[..]));
        out.push(("dense.b".into(), &self.dense.b[..]));
        out.push(("head.w".into(), &self.head.w.data[..]));
        out.push(("head.b".into(), &self.head.b[..]));
        out
    }

    /// Mutable blocks in the same order as [`LstmParams::blocks`].
    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.w_ih.data[..]);
            out.push(&mut layer.w_hh.data[..]);
            out.push(&mut layer.bias[..]);
        }
        out.push(&mut self.dense.w.data[..]);
        out.push(&mut self.dense.b[..]);
        out.push(&mut self.head.w.data[..]);
        out.push(&mut self.head.b[..]);
        out
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }

    fn sq_norm(&self) -> f64 {
        self.blocks().iter().map(|(_, b)| b.iter().map(|v| v * v).sum::<f64>()).sum()
    }
}

struct LayerCache {
    /// `(L·B) × input`, time-major.
    input: Vec<f64>,
    /// Gate activations, `(L·B) × 4H`.
    gates: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

/// Intermediates of a batched forward pass, consumed by [`backward`].
pub struct ForwardCache {
    batch: usize,
    steps: usize,
    layers: Vec<LayerCache>,
    /// Dropout multipliers, `B × H` (all ones in eval mode).
    mask: Vec<f64>,
    dropped: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    out: Vec<f64>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Output of sample `b`.
    pub fn output(&self, b: usize) -> [f64; HORIZON] {
        let mut y = [0.0; HORIZON];
        y.copy_from_slice(&self.out[b * HORIZON..(b + 1) * HORIZON]);
        y
    }

    /// All outputs, `B × 7` row-major.
    pub fn outputs(&self) -> &[f64] {
        &self.out
    }
}

fn add_bias(rows: &mut [f64], bias: &[f64]) {
    for row in rows.chunks_exact_mut(bias.len()) {
        row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
    }
}

/// Batched forward pass over windows of equal shape. In train mode inverted
/// dropout is applied to the final hidden state with a mask drawn from
/// `seed`; eval mode is deterministic and ignores the seed.
pub fn forward_batch(params: &LstmParams, cfg: &LstmConfig, xs: &[&Mat], train: bool, seed: u64) -> Result<ForwardCache> {
    let b = xs.len();
    if b == 0 {
        return Err(Error::insufficient("empty batch"));
    }
    let steps = xs[0].rows;
    let f = params.n_features;
    for x in xs {
        if x.rows != steps || x.cols != f {
            return Err(Error::Dimension { expected: f, got: x.cols });
        }
        if x.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lstm input window".into()));
        }
    }
    if steps == 0 {
        return Err(Error::insufficient("empty input window"));
    }
    let h = params.hidden_size;
    let mut input = vec![0.0; steps * b * f];
    for (s, x) in xs.iter().enumerate() {
        for t in 0..steps {
            input[(t * b + s) * f..(t * b + s + 1) * f].copy_from_slice(x.row(t));
        }
    }
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let width = layer.w_ih.cols;
        let rows = steps * b;
        let mut gates = vec![0.0; rows * 4 * h];
        gemm_slice(rows, width, 4 * h, 1.0, &input, Trans::No, &layer.w_ih.data, Trans::Yes, 0.0, &mut gates);
        add_bias(&mut gates, &layer.bias);
        let mut c = vec![0.0; rows * h];
        let mut hs = vec![0.0; rows * h];
        for t in 0..steps {
            let (prev_h, cur_h) = hs.split_at_mut(t * b * h);
            let g_t = &mut gates[t * b * 4 * h..(t + 1) * b * 4 * h];
            if t > 0 {
                let hp = &prev_h[(t - 1) * b * h..];
                gemm_slice(b, h, 4 * h, 1.0, hp, Trans::No, &layer.w_hh.data, Trans::Yes, 1.0, g_t);
            }
            let (prev_c, cur_c) = c.split_at_mut(t * b * h);
            for s in 0..b {
                let g = &mut g_t[s * 4 * h..(s + 1) * 4 * h];
                for j in 0..h {
                    let i_g = sigmoid(g[j]);
                    let f_g = sigmoid(g[h + j]);
                    let c_g = tanh(g[2 * h + j]);
                    let o_g = sigmoid(g[3 * h + j]);
                    g[j] = i_g;
                    g[h + j] = f_g;
                    g[2 * h + j] = c_g;
                    g[3 * h + j] = o_g;
                    let cp = if t > 0 { prev_c[(t - 1) * b * h + s * h + j] } else { 0.0 };
                    let cv = f_g * cp + i_g * c_g;
                    cur_c[s * h + j] = cv;
                    cur_h[s * h + j] = o_g * tanh(cv);
                }
            }
        }
        let next_input = hs.clone();
        layers.push(LayerCache { input, gates, c, h: hs });
        input = next_input;
    }
    let last = &layers.last().expect("at least one layer").h[(steps - 1) * b * h..];
    let mut mask = vec![1.0; b * h];
    if train && cfg.dropout_p > 0.0 {
        let keep = 1.0 - cfg.dropout_p;
        let mut rng = stream(seed, mix(0x4452_4f50, 0));
        for m in &mut mask {
            *m = if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
        }
    }
    let dropped: Vec<f64> = last.iter().zip(&mask).map(|(v, m)| v * m).collect();
    let d = params.dense.b.len();
    let mut z1 = vec![0.0; b * d];
    gemm_slice(b, h, d, 1.0, &dropped, Trans::No, &params.dense.w.data, Trans::Yes, 0.0, &mut z1);
    add_bias(&mut z1, &params.dense.b);
    let a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
    let mut out = vec![0.0; b * HORIZON];
    gemm_slice(b, d, HORIZON, 1.0, &a1, Trans::No, &params.head.w.data, Trans::Yes, 0.0, &mut out);
    add_bias(&mut out, &params.head.b);
    Ok(ForwardCache { batch: b, steps, layers, mask, dropped, z1, a1, out })
}

/// Single-window forward pass.
pub fn forward(params: &LstmParams, cfg: &LstmConfig, x: &Mat, train: bool, seed: u64) -> Result<([f64; HORIZON], ForwardCache)> {
    let cache = forward_batch(params, cfg, &[x], train, seed)?;
    Ok((cache.output(0), cache))
}

fn column_sums_into(rows: &[f64], width: usize, out: &mut [f64]) {
    for row in rows.chunks_exact(width) {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
    }
}

/// Gradient of `sum(grad_out ∘ output)` with respect to every parameter.
/// `grad_out` is `B × 7` row-major.
pub fn backward(params: &LstmParams, cache: &ForwardCache, grad_out: &[f64]) -> LstmParams {
    let b = cache.batch;
    let steps = cache.steps;
    let h = params.hidden_size;
    let d = params.dense.b.len();
    assert_eq!(grad_out.len(), b * HORIZON, "grad_out shape");
    let mut grad = LstmParams {
        n_features: params.n_features,
        hidden_size: h,
        layers: params
            .layers
            .iter()
            .map(|l| LstmLayer {
                w_ih: Mat::zeros(l.w_ih.rows, l.w_ih.cols),
                w_hh: Mat::zeros(l.w_hh.rows, l.w_hh.cols),
                bias: vec![0.0; l.bias.len()],
            })
            .collect(),
        dense: Dense { w: Mat::zeros(d, h), b: vec![0.0; d] },
        head: Dense { w: Mat::zeros(HORIZON, d), b: vec![0.0; HORIZON] },
    };

    gemm_slice(HORIZON, b, d, 1.0, grad_out, Trans::Yes, &cache.a1, Trans::No, 0.0, &mut grad.head.w.data);
    column_sums_into(grad_out, HORIZON, &mut grad.head.b);
    let mut dz1 = vec![0.0; b * d];
    gemm_slice(b, HORIZON, d, 1.0, grad_out, Trans::No, &params.head.w.data, Trans::No, 0.0, &mut dz1);
    dz1.iter_mut().zip(&cache.z1).for_each(|(g, z)| {
        if *z <= 0.0 {
            *g = 0.0;
        }
    });
    gemm_slice(d, b, h, 1.0, &dz1, Trans::Yes, &cache.dropped, Trans::No, 0.0, &mut grad.dense.w.data);
    column_sums_into(&dz1, d, &mut grad.dense.b);
    let mut dlast = vec![0.0; b * h];
    gemm_slice(b, d, h, 1.0, &dz1, Trans::No, &params.dense.w.data, Trans::No, 0.0, &mut dlast);
    dlast.iter_mut().zip(&cache.mask).for_each(|(g, m)| *g *= m);

    let rows = steps * b;
    // Gradient flowing into the current layer's hidden-state sequence.
    let mut dh_seq = vec![0.0; rows * h];
    dh_seq[(steps - 1) * b * h..].copy_from_slice(&dlast);
    for (l, (layer, lc)) in params.layers.iter().zip(&cache.layers).enumerate().rev() {
        let mut dgates = vec![0.0; rows * 4 * h];
        let mut dh_next = vec![0.0; b * h];
        let mut dc_next = vec![0.0; b * h];
        for t in (0..steps).rev() {
            for s in 0..b {
                let base = (t * b + s) * h;
                let g = &lc.gates[(t * b + s) * 4 * h..(t * b + s + 1) * 4 * h];
                let dg = &mut dgates[(t * b + s) * 4 * h..(t * b + s + 1) * 4 * h];
                for j in 0..h {
                    let (i_g, f_g, c_g, o_g) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let tc = tanh(lc.c[base + j]);
                    let cp = if t > 0 { lc.c[base - b * h + j] } else { 0.0 };
                    let dh = dh_seq[base + j] + dh_next[s * h + j];
                    let dc = dc_next[s * h + j] + dh * o_g * (1.0 - tc * tc);
                    dc_next[s * h + j] = dc * f_g;
                    dg[j] = dc * c_g * i_g * (1.0 - i_g);
                    dg[h + j] = dc * cp * f_g * (1.0 - f_g);
                    dg[2 * h + j] = dc * i_g * (1.0 - c_g * c_g);
                    dg[3 * h + j] = dh * tc * o_g * (1.0 - o_g);
                }
            }
            if t > 0 {
                let dg_t = &dgates[t * b * 4 * h..(t + 1) * b * 4 * h];
                gemm_slice(b, 4 * h, h, 1.0, dg_t, Trans::No, &layer.w_hh.data, Trans::No, 0.0, &mut dh_next);
            }
        }
        let width = layer.w_ih.cols;
        let gl = &mut grad.layers[l];
        gemm_slice(4 * h, rows, width, 1.0, &dgates, Trans::Yes, &lc.input, Trans::No, 0.0, &mut gl.w_ih.data);
        if steps > 1 {
            let tail = &dgates[b * 4 * h..];
            let head = &lc.h[..(steps - 1) * b * h];
            gemm_slice(4 * h, (steps - 1) * b, h, 1.0, tail, Trans::Yes, head, Trans::No, 0.0, &mut gl.w_hh.data);
        }
        column_sums_into(&dgates, 4 * h, &mut gl.bias);
        if l > 0 {
            dh_seq = vec![0.0; rows * width];
            gemm_slice(rows, 4 * h, width, 1.0, &dgates, Trans::No, &layer.w_ih.data, Trans::No, 0.0, &mut dh_seq);
        }
    }
    grad
}

/// Mean squared error over all outputs and its gradient with respect to
/// the outputs.
pub fn mse_grad(outputs: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    let n = outputs.len() as f64;
    let mut loss = 0.0;
    let grad = outputs
        .iter()
        .zip(targets)
        .map(|(o, y)| {
            let e = o - y;
            loss += e * e;
            2.0 * e / n
        })
        .collect();
    (loss / n, grad)
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &LstmParams, learning_rate: f64) -> Self {
        let shapes: Vec<usize> = params.blocks().iter().map(|(_, b)| b.len()).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut LstmParams, grad: &LstmParams) {
        self.step += 1;
        let bc1 = 1.0 - pow(self.beta1, self.step as f64);
        let bc2 = 1.0 - pow(self.beta2, self.step as f64);
        let grads = grad.blocks();
        for (k, p) in params.blocks_mut().into_iter().enumerate() {
            let g = grads[k].1;
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= self.learning_rate * mh / (sqrt(vh) + self.eps);
            }
        }
    }
}

/// Scales `grad` so its global norm is at most `max_norm`; returns the norm
/// before clipping.
pub fn clip_global_norm(grad: &mut LstmParams, max_norm: f64) -> f64 {
    let norm = sqrt(grad.sq_norm());
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for block in grad.blocks_mut() {
            block.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub early_stopped: bool,
    pub n_fit: usize,
    pub n_val: usize,
}

/// Trained network together with the scaling it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub params: LstmParams,
    pub standardization: StandardizationParams,
    pub report: TrainReport,
}

impl LstmModel {
    /// Forecast in original units.
    pub fn predict(&self, sample: &WindowSample) -> Result<[f64; HORIZON]> {
        Ok(self.predict_many(core::slice::from_ref(sample))?[0])
    }

    pub fn predict_many(&self, samples: &[WindowSample]) -> Result<Vec<[f64; HORIZON]>> {
        if self.standardization.n_features() != self.params.n_features {
            return Err(Error::Dimension { expected: self.params.n_features, got: self.standardization.n_features() });
        }
        let mut out = Vec::with_capacity(samples.len());
        let scaled: Vec<Mat> = samples.iter().map(|s| self.standardization.scale_x(&s.x)).collect();
        for chunk in scaled.chunks(256) {
            let refs: Vec<&Mat> = chunk.iter().collect();
            let cache = forward_batch(&self.params, &self.config, &refs, false, 0)?;
            for b in 0..chunk.len() {
                out.push(self.standardization.unscale_y(&cache.output(b)));
            }
        }
        Ok(out)
    }
}

fn eval_loss(params: &LstmParams, cfg: &LstmConfig, samples: &[WindowSample]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(256) {
        let refs: Vec<&Mat> = chunk.iter().map(|s| &s.x).collect();
        let cache = forward_batch(params, cfg, &refs, false, 0)?;
        let targets: Vec<f64> = chunk.iter().flat_map(|s| s.y).collect();
        let (loss, _) = mse_grad(cache.outputs(), &targets);
        total += loss * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Trains on chronologically ordered windows. The last
/// `validation_fraction` of them is held out for early stopping; scaling
/// statistics come from the remaining fit windows only.
pub fn train(windows: &[WindowSample], cfg: &LstmConfig) -> Result<LstmModel> {
    cfg.validate()?;
    if windows.len() < 10 {
        return Err(Error::insufficient(format!("lstm needs at least 10 windows, got {}", windows.len())));
    }
    let n_val = ((windows.len() as f64 * cfg.validation_fraction) as usize).max(1);
    let n_fit = windows.len() - n_val;
    let standardization = StandardizationParams::fit(&windows[..n_fit])?;
    let fit: Vec<WindowSample> = windows[..n_fit].iter().map(|s| standardization.apply(s)).collect();
    let val: Vec<WindowSample> = windows[n_fit..].iter().map(|s| standardization.apply(s)).collect();
    let n_features = standardization.n_features();
    if fit.iter().chain(&val).any(|s| s.x.rows != INPUT_DAYS || s.x.cols != n_features) {
        return Err(Error::data("windows differ in shape"));
    }

    let mut params = LstmParams::init(n_features, cfg);
    let mut adam = Adam::new(&params, cfg.learning_rate);
    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut wait = 0;
    let mut early_stopped = false;
    let mut train_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut order: Vec<usize> = (0..n_fit).collect();
    for epoch in 1..=cfg.max_epochs {
        let mut rng = stream(cfg.seed, mix(0x5348_5546, epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (k, batch) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&Mat> = batch.iter().map(|&i| &fit[i].x).collect();
            let drop_seed = mix(cfg.seed, mix(epoch as u64, k as u64));
            let cache = forward_batch(&params, cfg, &refs, true, drop_seed)?;
            let targets: Vec<f64> = batch.iter().flat_map(|&i| fit[i].y).collect();
            let (loss, g_out) = mse_grad(cache.outputs(), &targets);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            total += loss * batch.len() as f64;
            let mut grad = backward(&params, &cache, &g_out);
            clip_global_norm(&mut grad, cfg.clip_norm);
            adam.step(&mut params, &grad);
        }
        let val_loss = eval_loss(&params, cfg, &val)?;
        if !val_loss.is_finite() || !params.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        train_curve.push(total / n_fit as f64);
        val_curve.push(val_loss);
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best.clone_from(&params);
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                early_stopped = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    let report = TrainReport {
        epochs_run: train_curve.len(),
        train_loss: train_curve,
        val_loss: val_curve,
        best_epoch,
        best_val_loss: best_val,
        early_stopped,
        n_fit,
        n_val,
    };
    Ok(LstmModel { config: cfg.clone(), params: best, standardization, report })
}
