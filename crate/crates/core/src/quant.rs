//! Fixed-point versions of the cancellers.
//!
//! The fraction length for a width `Q` follows from the largest magnitude
//! seen anywhere in the datapath on calibration data (parameters, inputs,
//! polynomial basis values and partial sums): `I = floor(log2 max) + 1`
//! integer bits, `F = Q - 1 - I`.
//!
//! Optionally the input stream is scaled by `2^-a` with
//! `a = ceil(log2 max |Re, Im|)` so that it lies in `[-1, 1]`, and the model is
//! re-parametrized exactly to compensate (FIR taps and first-layer weights
//! times `2^a`, polynomial coefficients of order `p` times `2^(a p)`). The
//! output stays in physical units.

use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cancellers::basis::terms_per_delay;
use crate::cancellers::{LinearModel, Model, NnModel, PolyModel};
use crate::error::{Error, Result};
use crate::fixed::{CRaw, Cx, FxFormat};
use crate::pipeline::config::{poly_pe_for, NnLayout, StageConfig};
use crate::pipeline::datapath::{Datapath, FxPath, RangePath};
use crate::pipeline::reference::{basis_terms, complex_dot, nn_sample, LinearWeights, NnWeights, PolyWeights};
use crate::signal::SignalBuffer;

/// Input scaling exponent `a`: the smallest integer with `max |Re, Im| <= 2^a`.
pub fn input_shift(x: &[Complex64]) -> i32 {
    let max = x.iter().map(|c| c.re.abs().max(c.im.abs())).fold(0.0, f64::max);
    if max > 0.0 && max.is_finite() {
        max.log2().ceil() as i32
    } else {
        0
    }
}

fn pow2(e: i32) -> f64 {
    (e as f64).exp2()
}

fn cx(c: Complex64) -> Cx<f64> {
    Cx::new(c.re, c.im)
}

pub fn scale_linear(model: &LinearModel, shift: i32) -> LinearWeights<f64> {
    let s = pow2(shift);
    LinearWeights {
        taps: model.taps.iter().map(|t| cx(t * s)).collect(),
    }
}

pub fn scale_poly(model: &PolyModel, shift: i32) -> PolyWeights<f64> {
    let per = terms_per_delay(model.order);
    let orders: Vec<usize> = crate::cancellers::basis::order_pairs(model.order)
        .map(|(p, _)| p)
        .collect();
    PolyWeights {
        memory: model.memory,
        order: model.order,
        coeffs: model
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| cx(c * pow2(shift * orders[i % per] as i32)))
            .collect(),
    }
}

pub fn scale_nn(model: &NnModel, shift: i32) -> NnWeights<f64> {
    let s = pow2(shift);
    NnWeights {
        memory: model.memory,
        hidden: model.hidden,
        w1: model.net.w1.iter().map(|w| w * s).collect(),
        b1: model.net.b1.clone(),
        w2: model.net.w2.clone(),
        b2: model.net.b2.to_vec(),
        denorm_shift: model.denorm_shift,
        taps: scale_linear(&model.linear, shift).taps,
    }
}

fn scaled_input(x: &[Complex64], shift: i32) -> Vec<Cx<f64>> {
    let s = pow2(-shift);
    x.iter().map(|c| cx(c * s)).collect()
}

/// Datapath weights for one model, generic over the arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights<V> {
    Linear { n_pe: usize, w: LinearWeights<V> },
    Poly { n_pe: usize, w: PolyWeights<V> },
    Nn { layout: NnLayout, w: NnWeights<V> },
}

impl<V: Copy> Weights<V> {
    pub fn memory(&self) -> usize {
        match self {
            Weights::Linear { w, .. } => w.taps.len(),
            Weights::Poly { w, .. } => w.memory,
            Weights::Nn { w, .. } => w.memory,
        }
    }

    fn values(&self) -> Vec<V> {
        match self {
            Weights::Linear { w, .. } => w.values().collect(),
            Weights::Poly { w, .. } => w.values().collect(),
            Weights::Nn { w, .. } => w.values().collect(),
        }
    }

    fn map<U>(&self, f: impl FnMut(V) -> U) -> Weights<U> {
        match self {
            Weights::Linear { n_pe, w } => Weights::Linear {
                n_pe: *n_pe,
                w: w.map(f),
            },
            Weights::Poly { n_pe, w } => Weights::Poly {
                n_pe: *n_pe,
                w: w.map(f),
            },
            Weights::Nn { layout, w } => Weights::Nn {
                layout: *layout,
                w: w.map(f),
            },
        }
    }

    /// Datapath outputs for samples `range` of `x` (zero history before 0).
    fn run<D: Datapath<V = V>>(&self, dp: &mut D, fmt: FxFormat, x: &[Cx<V>], range: Range<usize>) -> Vec<Cx<V>> {
        let zero = Cx::new(dp.zero(), dp.zero());
        let l = self.memory();
        let window = |n: usize| -> Vec<Cx<V>> { (0..l).map(|k| if k <= n { x[n - k] } else { zero }).collect() };
        match self {
            Weights::Linear { n_pe, w } => range.map(|n| complex_dot(dp, *n_pe, &w.taps, &window(n))).collect(),
            Weights::Nn { layout, w } => {
                let stages = layout
                    .stages(w.memory, w.hidden, fmt)
                    .expect("layout checked at construction");
                range
                    .map(|n| nn_sample(dp, w, &stages, layout.linear_pe, &window(n)))
                    .collect()
            }
            Weights::Poly { n_pe, w } => {
                // basis terms of each sample, shared by the L windows that contain it
                let first = range.start.saturating_sub(l - 1);
                let per = terms_per_delay(w.order);
                let zero_basis = vec![zero; per];
                let bases: Vec<Vec<Cx<V>>> = (first..range.end).map(|n| basis_terms(dp, x[n], w.order)).collect();
                range
                    .map(|n| {
                        let stacked: Vec<Cx<V>> = (0..l)
                            .flat_map(|k| {
                                if k <= n {
                                    bases[n - k - first].clone()
                                } else {
                                    zero_basis.clone()
                                }
                            })
                            .collect();
                        complex_dot(dp, *n_pe, &w.coeffs, &stacked)
                    })
                    .collect()
            }
        }
    }
}

/// Float weights of `model` for input scaling `2^-shift`, with the default
/// PE allocation for its shape.
pub fn scaled_weights(model: &Model, shift: i32) -> Weights<f64> {
    match model {
        Model::Linear(m) => Weights::Linear {
            n_pe: m.memory().min(2),
            w: scale_linear(m, shift),
        },
        Model::Poly(m) => Weights::Poly {
            n_pe: poly_pe_for(m.coeffs.len()),
            w: scale_poly(m, shift),
        },
        Model::Nn(m) => Weights::Nn {
            layout: NnLayout::for_shape(m.memory, m.hidden),
            w: scale_nn(m, shift),
        },
    }
}

/// How the input stream is scaled before it enters the datapath.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputScaling {
    /// Samples enter as they are.
    #[default]
    None,
    /// Power-of-two normalization into `[-1, 1]`, absorbed into the weights.
    Pow2,
}

impl std::str::FromStr for InputScaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(InputScaling::None),
            "pow2" => Ok(InputScaling::Pow2),
            other => Err(Error::config(format!("unknown input scaling {other:?} (none or pow2)"))),
        }
    }
}

/// Input scaling plus the largest datapath magnitude on calibration data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub input_shift: i32,
    pub max_abs: f64,
}

impl Calibration {
    /// `floor(log2 max) + 1`, so that `max < 2^I`.
    pub fn int_bits(&self) -> i32 {
        if self.max_abs > 0.0 {
            self.max_abs.log2().floor() as i32 + 1
        } else {
            1
        }
    }

    pub fn format(&self, total_bits: u32) -> Result<FxFormat> {
        FxFormat::with_int_bits(total_bits, self.int_bits())
    }
}

/// Runs the scaled model on samples `range` of `x` in exact arithmetic and
/// records every input, parameter and intermediate magnitude.
pub fn calibrate(model: &Model, x: &SignalBuffer, range: Range<usize>, scaling: InputScaling) -> Result<Calibration> {
    model.validate()?;
    if range.start >= range.end || range.end > x.len() {
        return Err(Error::config(format!(
            "calibration range {range:?} is empty or exceeds {} samples",
            x.len()
        )));
    }
    let shift = match scaling {
        InputScaling::None => 0,
        InputScaling::Pow2 => input_shift(&x.samples[range.clone()]),
    };
    let weights = scaled_weights(model, shift);
    let xs = scaled_input(&x.samples, shift);
    let mut dp = RangePath::default();
    for v in weights.values() {
        dp.observe(v);
    }
    for c in &xs[range.clone()] {
        dp.observe(c.re);
        dp.observe(c.im);
    }
    let dummy = FxFormat::new(16, 8)?;
    weights.run(&mut dp, dummy, &xs, range);
    if !dp.max_abs.is_finite() {
        return Err(Error::Numeric("calibration produced non-finite values".into()));
    }
    Ok(Calibration {
        input_shift: shift,
        max_abs: dp.max_abs,
    })
}

/// Parameter quantization summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantReport {
    pub params: usize,
    /// Largest `|q(w) - w|` over parameters that fit the format.
    pub max_abs_error: f64,
    /// Parameters clipped to the format's range.
    pub saturated: usize,
}

/// A model in one fixed-point format, evaluated by the reference datapath.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub fmt: FxFormat,
    pub input_shift: i32,
    pub weights: Weights<i64>,
    pub report: QuantReport,
}

pub fn quantize_model(model: &Model, fmt: FxFormat, input_shift: i32) -> Result<QuantizedModel> {
    model.validate()?;
    let float = scaled_weights(model, input_shift);
    if let Weights::Nn { layout, w } = &float {
        layout.validate(w.memory, w.hidden)?;
    }
    let mut report = QuantReport {
        params: 0,
        max_abs_error: 0.0,
        saturated: 0,
    };
    let half = fmt.resolution() / 2.0;
    let weights = float.map(|v| {
        let q = fmt.quantize_raw(v);
        let err = (fmt.to_f64(q) - v).abs();
        report.params += 1;
        if err > half {
            report.saturated += 1;
        } else {
            report.max_abs_error = report.max_abs_error.max(err);
        }
        q
    });
    Ok(QuantizedModel {
        fmt,
        input_shift,
        weights,
        report,
    })
}

impl QuantizedModel {
    /// Scales by `2^-a` and rounds into the format.
    pub fn quantize_input(&self, x: &[Complex64]) -> Vec<CRaw> {
        let s = pow2(-self.input_shift);
        x.iter().map(|c| self.fmt.quantize_complex(c * s)).collect()
    }

    /// Raw datapath outputs for samples `range` of the quantized input `xq`.
    pub fn predict_raw(&self, xq: &[CRaw], range: Range<usize>) -> Result<Vec<CRaw>> {
        if range.end > xq.len() || range.start > range.end {
            return Err(Error::config(format!("range {range:?} exceeds {} samples", xq.len())));
        }
        Ok(self.weights.run(&mut FxPath::new(self.fmt), self.fmt, xq, range))
    }

    /// Cancellation signal for samples `range` of `x`, in physical units.
    pub fn predict_range(&self, x: &SignalBuffer, range: Range<usize>) -> Result<Vec<Complex64>> {
        let xq = self.quantize_input(&x.samples);
        Ok(self
            .predict_raw(&xq, range)?
            .into_iter()
            .map(|c| self.fmt.complex_to_f64(c))
            .collect())
    }

    pub fn predict(&self, x: &SignalBuffer) -> Result<SignalBuffer> {
        Ok(SignalBuffer::new(self.predict_range(x, 0..x.len())?, x.sample_rate_hz))
    }

    /// Same weights on a different NN PE allocation.
    pub fn with_nn_layout(mut self, layout: NnLayout) -> Result<Self> {
        match &mut self.weights {
            Weights::Nn { layout: l, w } => {
                layout.validate(w.memory, w.hidden)?;
                *l = layout;
                Ok(self)
            }
            _ => Err(Error::config("PE layout applies to NN cancellers only")),
        }
    }

    /// Same weights on `n_pe` complex PEs; `n_pe` must divide the basis length.
    pub fn with_poly_pe(mut self, n_pe: usize) -> Result<Self> {
        match &mut self.weights {
            Weights::Poly { n_pe: p, w } => {
                let k = w.coeffs.len();
                if n_pe == 0 || k % n_pe != 0 {
                    return Err(Error::config(format!(
                        "{k} basis terms cannot be split evenly over {n_pe} complex PEs"
                    )));
                }
                *p = n_pe;
                Ok(self)
            }
            _ => Err(Error::config("complex PE count applies to polynomial cancellers only")),
        }
    }

    /// Stage configurations when this is an NN canceller.
    pub fn nn_stages(&self) -> Option<(StageConfig, StageConfig)> {
        match &self.weights {
            Weights::Nn { layout, w } => layout.stages(w.memory, w.hidden, self.fmt).ok(),
            _ => None,
        }
    }
}
