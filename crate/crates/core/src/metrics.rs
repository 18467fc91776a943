//! Cancellation measurement and the fixed-point width sweep.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::cancellers::Model;
use crate::error::{Error, Result};
use crate::quant::{calibrate, quantize_model, InputScaling};
use crate::signal::SignalBuffer;

/// Fraction of a record used for fitting and calibration; the rest is held out.
pub const FIT_FRACTION: f64 = 0.7;

/// `-10 log10(P(y) / P(y_c))` over samples `n >= skip`; more negative is
/// better and a zero residual gives `-inf`. Pass `skip >= L` to drop the
/// warm-up samples whose window reaches before the record.
pub fn cancellation_db(y: &SignalBuffer, y_c: &SignalBuffer, skip: usize) -> Result<f64> {
    if y.len() != y_c.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            found: y_c.len(),
        });
    }
    cancellation_db_slices(&y.samples[skip.min(y.len())..], &y_c.samples[skip.min(y.len())..])
}

pub fn cancellation_db_slices(y: &[Complex64], y_c: &[Complex64]) -> Result<f64> {
    if y.len() != y_c.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            found: y_c.len(),
        });
    }
    let p_si: f64 = y.iter().map(|v| v.norm_sqr()).sum();
    let p_res: f64 = y_c.iter().map(|v| v.norm_sqr()).sum();
    if p_si.is_nan() || p_si <= 0.0 {
        return Err(Error::Numeric("self-interference power is zero over the window".into()));
    }
    if !p_res.is_finite() || !p_si.is_finite() {
        return Err(Error::Numeric("signal power is not finite".into()));
    }
    Ok(-10.0 * (p_si / p_res).log10())
}

/// Fit and held-out sample ranges of a record of `len` samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub fit: Range<usize>,
    pub eval: Range<usize>,
}

impl Split {
    pub fn new(len: usize, fit_fraction: f64) -> Result<Self> {
        if !(fit_fraction > 0.0 && fit_fraction < 1.0) {
            return Err(Error::config("fit fraction must be in (0, 1)"));
        }
        let cut = (len as f64 * fit_fraction).floor() as usize;
        if cut == 0 || cut >= len {
            return Err(Error::shape(format!("{len} samples are too few to split")));
        }
        Ok(Self {
            fit: 0..cut,
            eval: cut..len,
        })
    }

    pub fn standard(len: usize) -> Result<Self> {
        Self::new(len, FIT_FRACTION)
    }
}

/// Cancellation of a floating-point model on `range`.
pub fn model_cancellation(model: &Model, x: &SignalBuffer, y: &SignalBuffer, range: Range<usize>) -> Result<f64> {
    let y_hat = model.predict(x)?;
    let residual: Vec<Complex64> = y.samples[range.clone()]
        .iter()
        .zip(&y_hat.samples[range.clone()])
        .map(|(a, b)| a - b)
        .collect();
    cancellation_db_slices(&y.samples[range], &residual)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub q: u32,
    pub canceller: String,
    pub frac_bits: u32,
    pub cancellation_db: f64,
}

/// Held-out cancellation of every model at every width in `widths`. Each
/// model is calibrated once on the fit range; rows are sorted by width, then
/// canceller name.
pub fn sweep_q(
    models: &[Model],
    x: &SignalBuffer,
    y: &SignalBuffer,
    widths: impl IntoIterator<Item = u32>,
    split: &Split,
    scaling: InputScaling,
) -> Result<Vec<SweepRow>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if split.eval.end > x.len() {
        return Err(Error::shape("split exceeds the record"));
    }
    let calibrations = models
        .iter()
        .map(|m| calibrate(m, x, split.fit.clone(), scaling))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u32)> = widths
        .into_iter()
        .flat_map(|q| (0..models.len()).map(move |i| (i, q)))
        .collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(i, q)| {
            let cal = calibrations[i];
            let fmt = cal.format(q)?;
            let qm = quantize_model(&models[i], fmt, cal.input_shift)?;
            let y_hat = qm.predict_range(x, split.eval.clone())?;
            let y_eval = &y.samples[split.eval.clone()];
            let residual: Vec<Complex64> = y_eval.iter().zip(&y_hat).map(|(a, b)| a - b).collect();
            Ok(SweepRow {
                q,
                canceller: models[i].name().to_string(),
                frac_bits: fmt.frac_bits(),
                cancellation_db: cancellation_db_slices(y_eval, &residual)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.q.cmp(&b.q).then_with(|| a.canceller.cmp(&b.canceller)));
    Ok(rows)
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Smallest width from which `canceller` stays within `tol_db` of `target_db`
/// for every larger swept width.
pub fn saturation_width(rows: &[SweepRow], canceller: &str, target_db: f64, tol_db: f64) -> Option<u32> {
    let mut mine: Vec<&SweepRow> = rows.iter().filter(|r| r.canceller == canceller).collect();
    mine.sort_by_key(|r| r.q);
    let mut width = None;
    for r in mine.iter().rev() {
        if (r.cancellation_db - target_db).abs() <= tol_db {
            width = Some(r.q);
        } else {
            break;
        }
    }
    width
}
