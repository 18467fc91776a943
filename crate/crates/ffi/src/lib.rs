//! C ABI over `fdsic_core`.
//!
//! Datasets and models live behind opaque handles that the caller frees with
//! the matching `_free` function. Every fallible call returns an
//! `FdsicStatus`; on failure the message is available from
//! `fdsic_last_error` on the same thread until the next failing call.
//! Complex sample arrays are interleaved `re, im` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fdsic_core::cancellers::{fit_model, load_model, save_model, FitSpec, Model, ModelKind, Optimizer, TrainConfig};
use fdsic_core::complexity::{linear_counts, nn_counts, poly_counts};
use fdsic_core::config::GenConfig;
use fdsic_core::dataset::{load_dataset, save_dataset, Dataset};
use fdsic_core::metrics::{cancellation_db_slices, model_cancellation, Split};
use fdsic_core::pipeline::config::{poly_pe_for, NnLayout};
use fdsic_core::pipeline::sim::{simulate_nn_canceller, simulate_poly_canceller, NnHardware, PolyHardware, SimOptions};
use fdsic_core::quant::{calibrate, quantize_model, InputScaling, Weights};
use fdsic_core::{Error, ErrorKind, SignalBuffer};
use num_complex::Complex64;

/// Status of every fallible call. The nonzero codes 2 to 4 match the exit
/// codes of the `fdsic` command line.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdsicStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Numeric = 3,
    Io = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdsicKind {
    Linear = 0,
    Poly = 1,
    Nn = 2,
}

impl From<FdsicKind> for ModelKind {
    fn from(k: FdsicKind) -> Self {
        match k {
            FdsicKind::Linear => ModelKind::Linear,
            FdsicKind::Poly => ModelKind::Poly,
            FdsicKind::Nn => ModelKind::Nn,
        }
    }
}

/// Selects one of the two signals of a dataset.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdsicSignal {
    /// Transmitted samples x(n).
    Tx = 0,
    /// Received self-interference y(n).
    Rx = 1,
}

/// Opaque dataset handle.
pub struct FdsicDataset(Dataset);

/// Opaque canceller handle.
pub struct FdsicModel(Model);

/// Shape and training settings of `fdsic_model_fit`. Start from
/// `fdsic_fit_params_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FdsicFitParams {
    pub kind: FdsicKind,
    pub memory: usize,
    /// Odd nonlinearity order; poly only.
    pub order: usize,
    /// Hidden neurons; nn only.
    pub hidden: usize,
    /// Ridge term of the least-squares fits.
    pub lambda: f64,
    /// Leading fraction of the record used for fitting.
    pub fit_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Nonzero selects Adam, zero plain SGD.
    pub adam: u8,
    pub seed: u64,
    pub train_fraction: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FdsicOpCount {
    pub mults: u64,
    pub adds: u64,
    pub params: u64,
}

/// Timing of one pipeline simulation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FdsicCycleReport {
    pub latency: u64,
    pub first_output: u64,
    pub cycles_per_sample: u64,
    pub stall_cycles: u64,
    pub starved_cycles: u64,
    pub total_cycles: u64,
    pub samples: u64,
    /// Simulated outputs that differ from the fixed-point reference.
    pub mismatches: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Failure {
    Null(&'static str),
    Small { need: usize, have: usize },
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FdsicStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FdsicStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            FdsicStatus::NullPointer
        }
        Ok(Err(Failure::Small { need, have })) => {
            set_error(format!("buffer holds {have} samples, {need} needed"));
            FdsicStatus::BufferTooSmall
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            match e.kind() {
                ErrorKind::Config => FdsicStatus::Config,
                ErrorKind::Numeric => FdsicStatus::Numeric,
                ErrorKind::Io => FdsicStatus::Io,
            }
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            FdsicStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::Config("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn samples(p: *const f64, n: usize, what: &'static str) -> Result<Vec<Complex64>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let flat = std::slice::from_raw_parts(p, 2 * n);
    Ok(flat.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

unsafe fn write_samples(v: &[Complex64], p: *mut f64, capacity: usize) -> Result<(), Failure> {
    if capacity < v.len() {
        return Err(Failure::Small {
            need: v.len(),
            have: capacity,
        });
    }
    if v.is_empty() {
        return Ok(());
    }
    if p.is_null() {
        return Err(Failure::Null("output buffer"));
    }
    let flat = std::slice::from_raw_parts_mut(p, 2 * v.len());
    for (c, s) in flat.chunks_exact_mut(2).zip(v) {
        c[0] = s.re;
        c[1] = s.im;
    }
    Ok(())
}

/// Message of the last failing call on this thread, or null. Valid until
/// the next failing call on this thread.
#[no_mangle]
pub extern "C" fn fdsic_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fdsic_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates the synthetic dataset described by `config_toml` (flat TOML;
/// null or empty selects every default).
///
/// # Safety
/// `config_toml` is null or a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fdsic_dataset_generate(
    config_toml: *const c_char,
    out: *mut *mut FdsicDataset,
) -> FdsicStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        let cfg = if config_toml.is_null() {
            GenConfig::default()
        } else {
            let text = CStr::from_ptr(config_toml)
                .to_str()
                .map_err(|_| Error::Config("config is not valid UTF-8".into()))?;
            GenConfig::from_toml(text)?
        };
        *slot = Box::into_raw(Box::new(FdsicDataset(cfg.generate()?)));
        Ok(())
    })
}

/// Wraps caller-provided `x` and `y` of `n` complex samples each.
///
/// # Safety
/// `x` and `y` point to `2 n` doubles each; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fdsic_dataset_from_samples(
    x: *const f64,
    y: *const f64,
    n: usize,
    sample_rate_hz: f64,
    out: *mut *mut FdsicDataset,
) -> FdsicStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        let x = SignalBuffer::new(samples(x, n, "x")?, sample_rate_hz);
        let y = SignalBuffer::new(samples(y, n, "y")?, sample_rate_hz);
        *slot = Box::into_raw(Box::new(FdsicDataset(Dataset::new(x, y)?)));
        Ok(())
    })
}

/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fdsic_dataset_load(path: *const c_char, out: *mut *mut FdsicDataset) -> FdsicStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        *slot = Box::into_raw(Box::new(FdsicDataset(load_dataset(self::path(path)?)?)));
        Ok(())
    })
}

/// # Safety
/// `ds` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fdsic_dataset_save(ds: *const FdsicDataset, path: *const c_char) -> FdsicStatus {
    guard(|| {
        let ds = &get(ds, "dataset")?.0;
        save_dataset(&ds.x, &ds.y, self::path(path)?)?;
        Ok(())
    })
}

/// Number of complex samples, 0 for a null handle.
///
/// # Safety
/// `ds` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fdsic_dataset_len(ds: *const FdsicDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Copies one signal into `buf`, which holds `capacity` complex samples.
///
/// # Safety
/// `ds` is a live handle; `buf` points to `2 capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn fdsic_dataset_copy(
    ds: *const FdsicDataset,
    which: FdsicSignal,
    buf: *mut f64,
    capacity: usize,
) -> FdsicStatus {
    guard(|| {
        let ds = &get(ds, "dataset")?.0;
        let s = match which {
            FdsicSignal::Tx => &ds.x,
            FdsicSignal::Rx => &ds.y,
        };
        write_samples(&s.samples, buf, capacity)
    })
}

/// # Safety
/// `ds` is null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fdsic_dataset_free(ds: *mut FdsicDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Defaults for `kind`: memory 13, order 7, 18 hidden neurons, 70 % fit.
#[no_mangle]
pub extern "C" fn fdsic_fit_params_default(kind: FdsicKind) -> FdsicFitParams {
    let spec = FitSpec::new(kind.into(), 13);
    let t = TrainConfig::default();
    FdsicFitParams {
        kind,
        memory: spec.memory,
        order: spec.order,
        hidden: spec.hidden,
        lambda: spec.lambda,
        fit_fraction: fdsic_core::metrics::FIT_FRACTION,
        epochs: t.epochs,
        batch_size: t.batch_size,
        learning_rate: t.learning_rate,
        adam: (t.optimizer == Optimizer::Adam) as u8,
        seed: t.seed,
        train_fraction: t.train_fraction,
    }
}

/// Fits a canceller on the leading `fit_fraction` of the dataset.
///
/// # Safety
/// `ds` is a live handle; `params` is readable; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fdsic_model_fit(
    ds: *const FdsicDataset,
    params: *const FdsicFitParams,
    out: *mut *mut FdsicModel,
) -> FdsicStatus {
    guard(|| {
        let ds = &get(ds, "dataset")?.0;
        let p = *get(params, "params")?;
        let slot = self::out(out, "out")?;
        let split = Split::new(ds.len(), p.fit_fraction)?;
        let spec = FitSpec {
            kind: p.kind.into(),
            memory: p.memory,
            order: p.order,
            hidden: p.hidden,
            lambda: p.lambda,
            train: TrainConfig {
                epochs: p.epochs,
                batch_size: p.batch_size,
                learning_rate: p.learning_rate,
                optimizer: if p.adam != 0 { Optimizer::Adam } else { Optimizer::Sgd },
                seed: p.seed,
                train_fraction: p.train_fraction,
            },
        };
        let model = fit_model(&spec, &ds.x, &ds.y, split.fit)?;
        *slot = Box::into_raw(Box::new(FdsicModel(model)));
        Ok(())
    })
}

/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fdsic_model_load(path: *const c_char, out: *mut *mut FdsicModel) -> FdsicStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        *slot = Box::into_raw(Box::new(FdsicModel(load_model(self::path(path)?)?)));
        Ok(())
    })
}

/// # Safety
/// `model` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fdsic_model_save(model: *const FdsicModel, path: *const c_char) -> FdsicStatus {
    guard(|| {
        save_model(&get(model, "model")?.0, self::path(path)?)?;
        Ok(())
    })
}

/// Real-valued parameter count, 0 for a null handle.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fdsic_model_real_params(model: *const FdsicModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.real_params())
}

/// Floating-point SI estimate of `n` transmit samples into `y_hat`.
///
/// # Safety
/// `model` is a live handle; `x` and `y_hat` point to `2 n` doubles each.
#[no_mangle]
pub unsafe extern "C" fn fdsic_model_predict(
    model: *const FdsicModel,
    x: *const f64,
    n: usize,
    y_hat: *mut f64,
) -> FdsicStatus {
    guard(|| {
        let m = &get(model, "model")?.0;
        let x = SignalBuffer::new(samples(x, n, "x")?, 1.0);
        write_samples(&m.predict(&x)?.samples, y_hat, n)
    })
}

/// Held-out cancellation in dB (negative is better) after the leading
/// `fit_fraction` of the record. `total_bits` 0 evaluates the floating-point
/// model, otherwise the calibrated fixed-point datapath of that width.
///
/// # Safety
/// `model` and `ds` are live handles; `out_db` is writable.
#[no_mangle]
pub unsafe extern "C" fn fdsic_model_cancellation_db(
    model: *const FdsicModel,
    ds: *const FdsicDataset,
    fit_fraction: f64,
    total_bits: u32,
    out_db: *mut f64,
) -> FdsicStatus {
    guard(|| {
        let m = &get(model, "model")?.0;
        let ds = &get(ds, "dataset")?.0;
        let slot = out(out_db, "out_db")?;
        let split = Split::new(ds.len(), fit_fraction)?;
        *slot = if total_bits == 0 {
            model_cancellation(m, &ds.x, &ds.y, split.eval)?
        } else {
            let cal = calibrate(m, &ds.x, split.fit.clone(), InputScaling::None)?;
            let qm = quantize_model(m, cal.format(total_bits)?, cal.input_shift)?;
            let y_hat = qm.predict_range(&ds.x, split.eval.clone())?;
            let y = &ds.y.samples[split.eval];
            let residual: Vec<Complex64> = y.iter().zip(&y_hat).map(|(a, b)| a - b).collect();
            cancellation_db_slices(y, &residual)?
        };
        Ok(())
    })
}

/// Runs the cycle-accurate pipeline of an nn or poly canceller quantized to
/// `total_bits` on `n` dataset samples from `start`, with the default
/// processing-element layout, and compares it with the fixed-point reference.
///
/// # Safety
/// `model` and `ds` are live handles; `report` is writable.
#[no_mangle]
pub unsafe extern "C" fn fdsic_model_simulate(
    model: *const FdsicModel,
    ds: *const FdsicDataset,
    total_bits: u32,
    start: usize,
    n: usize,
    report: *mut FdsicCycleReport,
) -> FdsicStatus {
    guard(|| {
        let m = &get(model, "model")?.0;
        let ds = &get(ds, "dataset")?.0;
        let slot = out(report, "report")?;
        if n == 0 || start.checked_add(n).is_none_or(|end| end > ds.len()) {
            return Err(Error::Config(format!("samples {start}+{n} exceed the {}-sample record", ds.len())).into());
        }
        let split = Split::standard(ds.len())?;
        let cal = calibrate(m, &ds.x, split.fit, InputScaling::None)?;
        let mut qm = quantize_model(m, cal.format(total_bits)?, cal.input_shift)?;
        qm = match m {
            Model::Nn(nn) => qm.with_nn_layout(NnLayout::for_shape(nn.memory, nn.hidden))?,
            Model::Poly(p) => qm.with_poly_pe(poly_pe_for(fdsic_core::cancellers::basis_len(p.memory, p.order)))?,
            Model::Linear(_) => {
                return Err(Error::Config("only nn and poly cancellers have a pipeline model".into()).into())
            }
        };
        let xq = qm.quantize_input(&ds.x.samples[start..start + n]);
        let reference = qm.predict_raw(&xq, 0..n)?;
        let opts = SimOptions::default();
        let sim = match &qm.weights {
            Weights::Nn { layout, w } => simulate_nn_canceller(&NnHardware::build(w, *layout, qm.fmt)?, &xq, &opts)?,
            Weights::Poly { n_pe, w } => simulate_poly_canceller(&PolyHardware::build(w, *n_pe, qm.fmt)?, &xq, &opts)?,
            Weights::Linear { .. } => unreachable!(),
        };
        let r = sim.report;
        *slot = FdsicCycleReport {
            latency: r.latency,
            first_output: r.first_output,
            cycles_per_sample: r.cycles_per_sample,
            stall_cycles: r.stall_cycles,
            starved_cycles: r.starved_cycles,
            total_cycles: r.total_cycles,
            samples: r.samples as u64,
            mismatches: (sim.outputs.iter().zip(&reference).filter(|(a, b)| a != b).count()
                + sim.outputs.len().abs_diff(reference.len())) as u64,
        };
        Ok(())
    })
}

/// # Safety
/// `model` is null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fdsic_model_free(model: *mut FdsicModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Real multiplications, additions and parameters per cancelled sample.
/// `order` is read for poly and `hidden` for nn.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fdsic_complexity(
    kind: FdsicKind,
    memory: usize,
    order: usize,
    hidden: usize,
    out: *mut FdsicOpCount,
) -> FdsicStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        let c = match kind {
            FdsicKind::Linear => linear_counts(memory)?,
            FdsicKind::Poly => poly_counts(memory, order)?,
            FdsicKind::Nn => nn_counts(memory, hidden)?,
        };
        *slot = FdsicOpCount {
            mults: c.mults,
            adds: c.adds,
            params: c.params,
        };
        Ok(())
    })
}
