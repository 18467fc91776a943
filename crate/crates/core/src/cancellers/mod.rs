//! Floating-point reference cancellers and their estimation.

pub mod basis;
pub mod linear;
pub mod lstsq;
pub mod nn;
pub mod poly;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalBuffer;

pub use basis::{basis_len, build_basis, window};
pub use linear::{linear_predict, ls_estimate_linear, LinearModel};
pub use nn::{nn_forward, nn_train, NnModel, NnParams, Optimizer, TrainConfig};
pub use poly::{ls_estimate_poly, poly_predict, PolyModel};

/// Residual `y_c = y - y_hat`.
pub fn cancel(y: &SignalBuffer, y_hat: &SignalBuffer) -> Result<SignalBuffer> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            found: y_hat.len(),
        });
    }
    let out = y.samples.iter().zip(&y_hat.samples).map(|(a, b)| a - b).collect();
    Ok(SignalBuffer::new(out, y.sample_rate_hz))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Poly,
    Nn,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(ModelKind::Linear),
            "poly" => Ok(ModelKind::Poly),
            "nn" => Ok(ModelKind::Nn),
            other => Err(Error::config(format!("unknown canceller {other:?}"))),
        }
    }
}

/// Shape and estimation settings for [`fit_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub kind: ModelKind,
    pub memory: usize,
    /// Polynomial order `P`; only read for `poly`.
    pub order: usize,
    /// Hidden units `N_h`; only read for `nn`.
    pub hidden: usize,
    /// Ridge term of the least-squares fits.
    pub lambda: f64,
    pub train: TrainConfig,
}

impl FitSpec {
    pub fn new(kind: ModelKind, memory: usize) -> Self {
        Self {
            kind,
            memory,
            order: 7,
            hidden: 18,
            lambda: 0.0,
            train: TrainConfig::default(),
        }
    }
}

/// Fits a canceller of `spec` on samples `range` of `(x, y)`.
pub fn fit_model(spec: &FitSpec, x: &SignalBuffer, y: &SignalBuffer, range: std::ops::Range<usize>) -> Result<Model> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if range.start >= range.end || range.end > x.len() {
        return Err(Error::config(format!(
            "fit range {range:?} is empty or exceeds {} samples",
            x.len()
        )));
    }
    let (xf, yf) = (x.slice(range.clone()), y.slice(range));
    Ok(match spec.kind {
        ModelKind::Linear => Model::Linear(linear::ls_estimate_linear_ridge(&xf, &yf, spec.memory, spec.lambda)?),
        ModelKind::Poly => Model::Poly(ls_estimate_poly(&xf, &yf, spec.memory, spec.order, spec.lambda)?),
        ModelKind::Nn => Model::Nn(nn_train(&xf, &yf, spec.memory, spec.hidden, &spec.train)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Linear(LinearModel),
    Poly(PolyModel),
    Nn(NnModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Linear(_) => ModelKind::Linear,
            Model::Poly(_) => ModelKind::Poly,
            Model::Nn(_) => ModelKind::Nn,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Linear(_) => "linear",
            Model::Poly(_) => "poly",
            Model::Nn(_) => "nn",
        }
    }

    pub fn memory(&self) -> usize {
        match self {
            Model::Linear(m) => m.memory(),
            Model::Poly(m) => m.memory,
            Model::Nn(m) => m.memory,
        }
    }

    pub fn real_params(&self) -> usize {
        match self {
            Model::Linear(m) => m.real_params(),
            Model::Poly(m) => m.real_params(),
            Model::Nn(m) => m.real_params(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Linear(m) if m.taps.is_empty() => Err(Error::config("linear model has no taps")),
            Model::Linear(_) => Ok(()),
            Model::Poly(m) => m.validate(),
            Model::Nn(m) => m.validate(),
        }
    }

    pub fn predict(&self, x: &SignalBuffer) -> Result<SignalBuffer> {
        match self {
            Model::Linear(m) => Ok(linear_predict(m, x)),
            Model::Poly(m) => Ok(poly_predict(m, x)),
            Model::Nn(m) => m.predict(x),
        }
    }
}

pub const MODEL_FORMAT: &str = "fdsic-model";
pub const MODEL_VERSION: u32 = 1;

/// Versioned JSON document wrapping a [`Model`]. Floats are written with
/// shortest round-trip precision, complex values as `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub model: Model,
}

impl ModelFile {
    pub fn new(model: Model) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model,
        }
    }
}

pub fn model_to_string(model: &Model) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::new(model.clone()))?)
}

pub fn model_from_str(text: &str) -> Result<Model> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format != MODEL_FORMAT {
        return Err(Error::Format(format!("not a model file (format {:?})", file.format)));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {}", file.version)));
    }
    file.model.validate()?;
    Ok(file.model)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_string(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    model_from_str(&std::fs::read_to_string(path)?)
}
