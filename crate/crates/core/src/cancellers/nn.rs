//! Linear FIR plus two-layer real-valued network canceller.
//!
//! The network sees `[Re x(n) .. Re x(n-L+1), Im x(n) .. Im x(n-L+1)]`, has
//! one ReLU hidden layer and a linear two-unit output `(Re, Im)`. It is trained
//! on the normalized residual of the linear canceller, and its output is
//! restored to physical scale by a power-of-two factor `2^s`.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::basis::fill_window;
use super::linear::{linear_predict, ls_estimate_linear, LinearModel};
use crate::error::{Error, Result};
use crate::signal::SignalBuffer;

/// Dense weights of the network; `w1` is `hidden x 2L`, `w2` is `2 x hidden`,
/// both row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnParams {
    pub inputs: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: [f64; 2],
}

impl NnParams {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            inputs,
            hidden,
            w1: vec![0.0; hidden * inputs],
            b1: vec![0.0; hidden],
            w2: vec![0.0; 2 * hidden],
            b2: [0.0; 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w1.len() != self.hidden * self.inputs
            || self.b1.len() != self.hidden
            || self.w2.len() != 2 * self.hidden
        {
            return Err(Error::shape(format!(
                "network weights do not match {} inputs x {} hidden units",
                self.inputs, self.hidden
            )));
        }
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("network weights are not finite".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 2
    }

    /// Parameters flattened as `w1, b1, w2, b2`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn from_vec(inputs: usize, hidden: usize, v: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(inputs, hidden);
        if v.len() != p.param_count() {
            return Err(Error::shape("flattened parameter vector has the wrong length"));
        }
        let (w1, rest) = v.split_at(p.w1.len());
        let (b1, rest) = rest.split_at(p.b1.len());
        let (w2, b2) = rest.split_at(p.w2.len());
        p.w1.copy_from_slice(w1);
        p.b1.copy_from_slice(b1);
        p.w2.copy_from_slice(w2);
        p.b2.copy_from_slice(b2);
        Ok(p)
    }

    /// Hidden pre-activations into `z`, returns the two outputs.
    fn forward_into(&self, input: &[f64], z: &mut [f64]) -> [f64; 2] {
        let mut out = self.b2;
        for (j, (row, zj)) in self.w1.chunks_exact(self.inputs).zip(z.iter_mut()).enumerate() {
            let pre = self.b1[j] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            *zj = pre;
            let act = pre.max(0.0);
            out[0] += self.w2[j] * act;
            out[1] += self.w2[self.hidden + j] * act;
        }
        out
    }

    pub fn forward(&self, input: &[f64]) -> [f64; 2] {
        let mut z = vec![0.0; self.hidden];
        self.forward_into(input, &mut z)
    }

    /// Mean squared error over both outputs of every row, and its gradient.
    ///
    /// `inputs` is `rows x inputs`, `targets` is `rows x 2`, both row-major.
    pub fn loss_and_grad(&self, inputs: &[f64], targets: &[f64]) -> (f64, NnParams) {
        let rows = targets.len() / 2;
        let mut grad = NnParams::zeros(self.inputs, self.hidden);
        let mut z = vec![0.0; self.hidden];
        let mut loss = 0.0;
        let norm = 1.0 / (2 * rows) as f64;
        for r in 0..rows {
            let input = &inputs[r * self.inputs..(r + 1) * self.inputs];
            let out = self.forward_into(input, &mut z);
            let e = [out[0] - targets[2 * r], out[1] - targets[2 * r + 1]];
            loss += (e[0] * e[0] + e[1] * e[1]) * norm;
            let d = [2.0 * e[0] * norm, 2.0 * e[1] * norm];
            grad.b2[0] += d[0];
            grad.b2[1] += d[1];
            for (j, &zj) in z.iter().enumerate() {
                if zj <= 0.0 {
                    continue;
                }
                grad.w2[j] += d[0] * zj;
                grad.w2[self.hidden + j] += d[1] * zj;
                let dz = d[0] * self.w2[j] + d[1] * self.w2[self.hidden + j];
                grad.b1[j] += dz;
                let g = &mut grad.w1[j * self.inputs..(j + 1) * self.inputs];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += dz * xi;
                }
            }
        }
        (loss, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnModel {
    pub memory: usize,
    pub hidden: usize,
    pub net: NnParams,
    /// Output denormalization: the network output is multiplied by `2^denorm_shift`.
    pub denorm_shift: i32,
    pub linear: LinearModel,
}

impl NnModel {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 || self.hidden == 0 {
            return Err(Error::config("NN canceller needs L >= 1 and N_h >= 1"));
        }
        if self.net.inputs != 2 * self.memory || self.net.hidden != self.hidden {
            return Err(Error::shape("network dimensions do not match (L, N_h)"));
        }
        if self.linear.memory() != self.memory {
            return Err(Error::shape("linear canceller length differs from L"));
        }
        self.net.validate()
    }

    /// `(2L+1) N_h` hidden, `2 N_h + 2` output and `2L` linear parameters.
    pub fn real_params(&self) -> usize {
        self.net.param_count() + self.linear.real_params()
    }

    pub fn denorm_scale(&self) -> f64 {
        (self.denorm_shift as f64).exp2()
    }

    /// Total cancellation signal: linear FIR plus denormalized network output.
    pub fn predict(&self, x: &SignalBuffer) -> Result<SignalBuffer> {
        let mut out = linear_predict(&self.linear, x);
        let mut window = vec![Complex64::new(0.0, 0.0); self.memory];
        let mut input = vec![0.0; 2 * self.memory];
        for (n, slot) in out.samples.iter_mut().enumerate() {
            fill_window(&x.samples, n, &mut window);
            split_window(&window, &mut input);
            *slot += self.nn_output(&input);
        }
        Ok(out)
    }

    fn nn_output(&self, input: &[f64]) -> Complex64 {
        let o = self.net.forward(input);
        Complex64::new(o[0], o[1]) * self.denorm_scale()
    }
}

/// Real-valued network input for one window: all real parts, then all imaginary parts.
pub fn split_window(window: &[Complex64], out: &mut [f64]) {
    let l = window.len();
    for (i, w) in window.iter().enumerate() {
        out[i] = w.re;
        out[l + i] = w.im;
    }
}

/// Network contribution for one window `[x(n) .. x(n-L+1)]`, already scaled by `2^s`.
pub fn nn_forward(model: &NnModel, window: &[Complex64]) -> Result<Complex64> {
    if window.len() != model.memory {
        return Err(Error::shape(format!(
            "window of {} samples for a network with L={}",
            window.len(),
            model.memory
        )));
    }
    let mut input = vec![0.0; 2 * model.memory];
    split_window(window, &mut input);
    Ok(model.nn_output(&input))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Fraction of the samples used for gradient steps; the rest is validation.
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.003,
            optimizer: Optimizer::Adam,
            seed: 1,
            train_fraction: 0.8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction must be in (0, 1)"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Per-epoch losses recorded by [`nn_train_with_history`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub initial_val_mse: f64,
    pub val_mse: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

pub fn nn_train(
    x: &SignalBuffer,
    y: &SignalBuffer,
    memory: usize,
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<NnModel> {
    nn_train_with_history(x, y, memory, hidden, cfg).map(|(m, _)| m)
}

/// Fits the linear canceller on the training split, then trains the network on
/// its normalized residual. The returned weights are those with the lowest
/// validation error seen, including the initial ones.
pub fn nn_train_with_history(
    x: &SignalBuffer,
    y: &SignalBuffer,
    memory: usize,
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<(NnModel, TrainHistory)> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if memory == 0 || hidden == 0 {
        return Err(Error::config("NN canceller needs L >= 1 and N_h >= 1"));
    }
    let n_train = (x.len() as f64 * cfg.train_fraction).floor() as usize;
    if n_train < memory.max(1) || n_train >= x.len() {
        return Err(Error::shape(format!(
            "{} samples are too few to split for training",
            x.len()
        )));
    }

    let train_x = SignalBuffer::new(x.samples[..n_train].to_vec(), x.sample_rate_hz);
    let train_y = SignalBuffer::new(y.samples[..n_train].to_vec(), y.sample_rate_hz);
    let linear = ls_estimate_linear(&train_x, &train_y, memory)?;
    let y_lin = linear_predict(&linear, x);
    let residual: Vec<Complex64> = y.samples.iter().zip(&y_lin.samples).map(|(a, b)| a - b).collect();

    let mean = residual[..n_train].iter().sum::<Complex64>() / n_train as f64;
    let var = residual[..n_train].iter().map(|r| (r - mean).norm_sqr()).sum::<f64>() / (2 * n_train) as f64;
    let denorm_shift = if var > 0.0 {
        (0.5 * var.log2()).round() as i32
    } else {
        0
    };
    let inv_scale = (-(denorm_shift as f64)).exp2();

    let inputs_per_row = 2 * memory;
    let mut inputs = vec![0.0; x.len() * inputs_per_row];
    let mut window = vec![Complex64::new(0.0, 0.0); memory];
    for n in 0..x.len() {
        fill_window(&x.samples, n, &mut window);
        split_window(&window, &mut inputs[n * inputs_per_row..(n + 1) * inputs_per_row]);
    }
    let targets: Vec<f64> = residual
        .iter()
        .flat_map(|r| {
            let t = (r - mean) * inv_scale;
            [t.re, t.im]
        })
        .collect();

    let (train_in, val_in) = inputs.split_at(n_train * inputs_per_row);
    let (train_t, val_t) = targets.split_at(n_train * 2);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = NnParams::zeros(inputs_per_row, hidden);
    // He-uniform hidden layer; the output layer starts at zero so an all-zero
    // target is matched from the first step.
    let bound = (6.0 / inputs_per_row as f64).sqrt();
    for w in &mut net.w1 {
        *w = rng.random_range(-bound..bound);
    }

    let validation = |p: &NnParams| p.loss_and_grad(val_in, val_t).0;
    let mut history = TrainHistory {
        initial_val_mse: validation(&net),
        ..TrainHistory::default()
    };
    history.best_val_mse = history.initial_val_mse;
    let mut best = net.clone();

    let mut order: Vec<usize> = (0..n_train).collect();
    let mut batch_in = Vec::with_capacity(cfg.batch_size * inputs_per_row);
    let mut batch_t = Vec::with_capacity(cfg.batch_size * 2);
    let mut adam = (cfg.optimizer == Optimizer::Adam).then(|| AdamState::new(net.param_count()));
    let mut flat = net.to_vec();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch_in.clear();
            batch_t.clear();
            for &r in chunk {
                batch_in.extend_from_slice(&train_in[r * inputs_per_row..(r + 1) * inputs_per_row]);
                batch_t.extend_from_slice(&train_t[2 * r..2 * r + 2]);
            }
            let (loss, grad) = net.loss_and_grad(&batch_in, &batch_t);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training loss became {loss} at epoch {epoch}, batch {b}; lower the learning rate"
                )));
            }
            let g = grad.to_vec();
            match adam.as_mut() {
                Some(state) => state.step(&mut flat, &g, cfg.learning_rate),
                None => flat.iter_mut().zip(&g).for_each(|(p, g)| *p -= cfg.learning_rate * g),
            }
            net = NnParams::from_vec(inputs_per_row, hidden, &flat)?;
        }
        let val = validation(&net);
        if !val.is_finite() {
            return Err(Error::Numeric(format!("validation loss became {val} at epoch {epoch}")));
        }
        history.val_mse.push(val);
        if val < history.best_val_mse {
            history.best_val_mse = val;
            history.best_epoch = epoch + 1;
            best = net.clone();
        }
    }

    // Fold the residual mean back in so that inference is shift-only.
    best.b2[0] += mean.re * inv_scale;
    best.b2[1] += mean.im * inv_scale;

    let model = NnModel {
        memory,
        hidden,
        net: best,
        denorm_shift,
        linear,
    };
    Ok((model, history))
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}
