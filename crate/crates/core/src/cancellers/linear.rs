use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::basis::fill_window;
use super::lstsq;
use crate::error::{Error, Result};
use crate::signal::SignalBuffer;

/// Complex FIR taps `h(l)`, `l = 0..L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub taps: Vec<Complex64>,
}

impl LinearModel {
    pub fn new(taps: Vec<Complex64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::config("linear canceller needs at least one tap"));
        }
        Ok(Self { taps })
    }

    pub fn memory(&self) -> usize {
        self.taps.len()
    }

    pub fn real_params(&self) -> usize {
        2 * self.taps.len()
    }

    pub fn predict_at(&self, x: &[Complex64], n: usize) -> Complex64 {
        self.taps
            .iter()
            .enumerate()
            .take(n + 1)
            .map(|(l, h)| h * x[n - l])
            .sum()
    }
}

pub fn linear_predict(model: &LinearModel, x: &SignalBuffer) -> SignalBuffer {
    let out = (0..x.len()).map(|n| model.predict_at(&x.samples, n)).collect();
    SignalBuffer::new(out, x.sample_rate_hz)
}

/// Least-squares FIR fit of `y` from `x` over all samples of the buffers.
pub fn ls_estimate_linear(x: &SignalBuffer, y: &SignalBuffer, memory: usize) -> Result<LinearModel> {
    ls_estimate_linear_ridge(x, y, memory, 0.0)
}

pub fn ls_estimate_linear_ridge(x: &SignalBuffer, y: &SignalBuffer, memory: usize, lambda: f64) -> Result<LinearModel> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if memory == 0 {
        return Err(Error::config("memory length L must be at least 1"));
    }
    let taps = lstsq::solve(memory, &y.samples, lambda, |n, row| fill_window(&x.samples, n, row))?;
    LinearModel::new(taps)
}
