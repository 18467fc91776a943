//! The `fdsic` command line.
//!
//! Results go to stdout and files; failures print one JSON object to stderr
//! and exit with 2 (configuration), 3 (numerical) or 4 (I/O).

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use crate::cancellers::{fit_model, load_model, save_model, FitSpec, Model, ModelKind, Optimizer, TrainConfig};
use crate::complexity::{
    complexity_table, linear_counts, measured_nn_counts, measured_poly_counts, nn_counts, poly_counts, render_table,
};
use crate::config::GenConfig;
use crate::dataset::{load_dataset, Dataset};
use crate::error::{Error, ErrorKind, Result};
use crate::fixed::{CRaw, FxFormat, FxSpec};
use crate::metrics::{cancellation_db_slices, model_cancellation, saturation_width, sweep_q, sweep_to_csv, Split};
use crate::pipeline::{
    analytic_performance, poly_pe_for, simulate_nn_canceller, simulate_poly_canceller, trace_to_csv,
    CancellerSimulation, Handshake, NnHardware, NnLayout, PolyHardware, SimOptions,
};
use crate::quant::{calibrate, quantize_model, InputScaling, QuantizedModel, Weights};

#[derive(Debug, Parser)]
#[command(name = "fdsic", version, about = "Digital self-interference cancellation toolkit")]
pub struct Cli {
    /// Print the effective settings of the command as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a transmit / self-interference dataset.
    Gen(GenArgs),
    /// Fit a canceller and report its cancellation.
    Fit(FitArgs),
    /// Cancellation of a saved model, optionally in fixed point.
    Eval(EvalArgs),
    /// Fixed-point cancellation over a range of word widths.
    SweepQ(SweepArgs),
    /// Operation and parameter counts per cancelled sample.
    Complexity(ComplexityArgs),
    /// Cycle-accurate simulation of a canceller pipeline.
    Simulate(SimulateArgs),
    /// Fit, quantize, count and simulate both cancellers side by side.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    /// TOML file of generation settings; missing keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `seed` from the config file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Seed of the network initialization and batch shuffling.
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long = "lr", default_value_t = TrainConfig::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long = "batch", default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value = "adam")]
    pub optimizer: Optimizer,
    /// Share of the fitting samples used for gradient steps; the rest validates.
    #[arg(long, default_value_t = TrainConfig::default().train_fraction)]
    pub train_fraction: f64,
    /// Ridge term of the least-squares fits.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Share of the record used for fitting; the rest is held out.
    #[arg(long, default_value_t = crate::metrics::FIT_FRACTION)]
    pub fit_fraction: f64,
}

impl TrainArgs {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed: self.seed,
            train_fraction: self.train_fraction,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    pub kind: ModelKind,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Memory length.
    #[arg(long = "L", default_value_t = 13)]
    pub memory: usize,
    /// Polynomial order (odd).
    #[arg(long = "P", default_value_t = 7)]
    pub order: usize,
    /// Hidden units.
    #[arg(long = "Nh", default_value_t = 18)]
    pub hidden: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Fixed-point format such as `Q17.12`, or a width such as `Q17` whose
    /// fraction bits are calibrated.
    #[arg(long)]
    pub fx: Option<String>,
    /// Input scaling ahead of the datapath: `none` or `pow2`.
    #[arg(long, default_value = "none")]
    pub input_scaling: InputScaling,
    #[arg(long, default_value_t = crate::metrics::FIT_FRACTION)]
    pub fit_fraction: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub models: Vec<PathBuf>,
    /// Widths: `8..28` (inclusive), `8,12,16` or a single value.
    #[arg(long, default_value = "8..28")]
    pub q: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Input scaling ahead of the datapath: `none` or `pow2`.
    #[arg(long, default_value = "none")]
    pub input_scaling: InputScaling,
    #[arg(long, default_value_t = crate::metrics::FIT_FRACTION)]
    pub fit_fraction: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ComplexityArgs {
    #[arg(long = "L", default_value_t = 13)]
    pub memory: usize,
    #[arg(long = "P", default_value_t = 7)]
    pub order: usize,
    #[arg(long = "Nh", default_value_t = 18)]
    pub hidden: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    pub kind: ModelKind,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Hidden-layer PEs; defaults to 52 when that fits the model.
    #[arg(long = "npe-h")]
    pub npe_h: Option<usize>,
    /// Output-layer PEs.
    #[arg(long = "npe-o")]
    pub npe_o: Option<usize>,
    /// Complex PEs of the linear FIR branch.
    #[arg(long = "npe-lin")]
    pub npe_lin: Option<usize>,
    /// Complex PEs of the polynomial canceller.
    #[arg(long)]
    pub pe: Option<usize>,
    /// Format such as `Q17.12` or a width to calibrate; defaults to Q17 (nn) or Q23 (poly).
    #[arg(long)]
    pub fx: Option<String>,
    /// Per-sample outputs as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-cycle stage activity as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// First simulated sample; defaults to the start of the held-out part.
    #[arg(long)]
    pub start: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Repeating input-valid pattern, e.g. `1101`.
    #[arg(long, default_value = "1")]
    pub input_valid: String,
    /// Repeating output-ready pattern.
    #[arg(long, default_value = "1")]
    pub output_ready: String,
    #[arg(long)]
    pub max_cycles: Option<u64>,
    /// Input scaling ahead of the datapath: `none` or `pow2`.
    #[arg(long, default_value = "none")]
    pub input_scaling: InputScaling,
    #[arg(long, default_value_t = crate::metrics::FIT_FRACTION)]
    pub fit_fraction: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long = "L", default_value_t = 13)]
    pub memory: usize,
    #[arg(long = "P", default_value_t = 7)]
    pub order: usize,
    #[arg(long = "Nh", default_value_t = 18)]
    pub hidden: usize,
    #[arg(long, default_value_t = 17)]
    pub q_nn: u32,
    #[arg(long, default_value_t = 23)]
    pub q_poly: u32,
    /// Input scaling ahead of the datapath: `none` or `pow2`.
    #[arg(long, default_value = "none")]
    pub input_scaling: InputScaling,
    /// Samples pushed through each pipeline simulation.
    #[arg(long, default_value_t = 200)]
    pub sim_samples: usize,
    #[command(flatten)]
    pub train: TrainArgs,
}

/// Parses, runs and reports; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            print_error("config", 2, first);
            return 2;
        }
    };
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            let kind = match e.kind() {
                ErrorKind::Config => "config",
                ErrorKind::Numeric => "numeric",
                ErrorKind::Io => "io",
            };
            print_error(kind, e.exit_code(), &e.to_string());
            e.exit_code()
        }
    }
}

fn print_error(kind: &str, code: i32, message: &str) {
    let line = serde_json::json!({ "error": kind, "code": code, "message": message });
    eprintln!("{line}");
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    if cli.print_config {
        let text = match &cli.command {
            Command::Gen(a) => gen_config(a)?.to_toml(),
            Command::Fit(a) => to_toml(a)?,
            Command::Eval(a) => to_toml(a)?,
            Command::SweepQ(a) => to_toml(a)?,
            Command::Complexity(a) => to_toml(a)?,
            Command::Simulate(a) => to_toml(a)?,
            Command::Compare(a) => to_toml(a)?,
        };
        out.write_all(text.as_bytes())?;
        return Ok(());
    }
    let text = match &cli.command {
        Command::Gen(a) => cmd_gen(a)?,
        Command::Fit(a) => cmd_fit(a)?,
        Command::Eval(a) => cmd_eval(a)?,
        Command::SweepQ(a) => cmd_sweep(a)?,
        Command::Complexity(a) => cmd_complexity(a)?,
        Command::Simulate(a) => cmd_simulate(a, out)?,
        Command::Compare(a) => cmd_compare(a)?,
    };
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn to_toml<T: Serialize>(v: &T) -> Result<String> {
    toml::to_string(v).map_err(|e| Error::Config(e.to_string()))
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    v.as_deref().ok_or_else(|| Error::Config(format!("{flag} is required")))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(Error::from)
}

fn fx_spec(text: Option<&str>, default_width: u32) -> Result<FxSpec> {
    match text {
        Some(t) => t.parse(),
        None => Ok(FxSpec::Width(default_width)),
    }
}

/// Quantizes `model` with the input scaling calibrated on `split.fit`.
fn quantize(model: &Model, ds: &Dataset, split: &Split, spec: FxSpec, scaling: InputScaling) -> Result<QuantizedModel> {
    let cal = calibrate(model, &ds.x, split.fit.clone(), scaling)?;
    let fmt = match spec {
        FxSpec::Full(f) => f,
        FxSpec::Width(q) => cal.format(q)?,
    };
    quantize_model(model, fmt, cal.input_shift)
}

fn fixed_cancellation(qm: &QuantizedModel, ds: &Dataset, split: &Split) -> Result<f64> {
    let y_hat = qm.predict_range(&ds.x, split.eval.clone())?;
    let y = &ds.y.samples[split.eval.clone()];
    let residual: Vec<Complex64> = y.iter().zip(&y_hat).map(|(a, b)| a - b).collect();
    cancellation_db_slices(y, &residual)
}

fn format_line(qm: &QuantizedModel) -> String {
    match qm.input_shift {
        0 => format!("format: {}", qm.fmt),
        a => format!("format: {} (input scaled by 2^{})", qm.fmt, -a),
    }
}

fn describe(model: &Model) -> String {
    match model {
        Model::Linear(m) => format!("linear (L={})", m.memory()),
        Model::Poly(m) => format!("poly (L={}, P={})", m.memory, m.order),
        Model::Nn(m) => format!("nn (L={}, N_h={})", m.memory, m.hidden),
    }
}

fn gen_config(a: &GenArgs) -> Result<GenConfig> {
    let mut cfg = match &a.config {
        Some(p) => GenConfig::load(p)?,
        None => GenConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_gen(a: &GenArgs) -> Result<String> {
    let out = required(&a.out, "--out")?;
    let cfg = gen_config(a)?;
    let ds = cfg.generate()?;
    std::fs::write(out, ds.to_bytes())?;
    let si_power = ds.y.mean_power();
    Ok(format!(
        "wrote {} samples at {} Hz to {}\nmean SI power: {:.3} dB\n",
        ds.len(),
        ds.sample_rate_hz(),
        out.display(),
        10.0 * si_power.log10()
    ))
}

fn cmd_fit(a: &FitArgs) -> Result<String> {
    let ds = load_dataset(required(&a.dataset, "--dataset")?)?;
    let out = required(&a.out, "--out")?;
    let split = Split::new(ds.len(), a.train.fit_fraction)?;
    let spec = FitSpec {
        kind: a.kind,
        memory: a.memory,
        order: a.order,
        hidden: a.hidden,
        lambda: a.train.lambda,
        train: a.train.train_config(),
    };
    let model = fit_model(&spec, &ds.x, &ds.y, split.fit.clone())?;
    save_model(&model, out)?;
    let skip = a.memory.min(split.fit.end);
    let fit_db = model_cancellation(&model, &ds.x, &ds.y, skip..split.fit.end)?;
    let eval_db = model_cancellation(&model, &ds.x, &ds.y, split.eval.clone())?;
    Ok(format!(
        "canceller: {}\nreal parameters: {}\ncancellation (fit, {} samples): {fit_db:.2} dB\ncancellation (held-out, {} samples): {eval_db:.2} dB\nmodel written to {}\n",
        describe(&model),
        model.real_params(),
        split.fit.end - skip,
        split.eval.len(),
        out.display()
    ))
}

fn cmd_eval(a: &EvalArgs) -> Result<String> {
    let ds = load_dataset(required(&a.dataset, "--dataset")?)?;
    let model = load_model(required(&a.model, "--model")?)?;
    let split = Split::new(ds.len(), a.fit_fraction)?;
    let float_db = model_cancellation(&model, &ds.x, &ds.y, split.eval.clone())?;
    let mut s = format!(
        "canceller: {}\ncancellation (float, held-out {} samples): {float_db:.2} dB\n",
        describe(&model),
        split.eval.len()
    );
    if let Some(fx) = &a.fx {
        let qm = quantize(&model, &ds, &split, fx.parse()?, a.input_scaling)?;
        let fixed_db = fixed_cancellation(&qm, &ds, &split)?;
        let _ = writeln!(s, "{}", format_line(&qm));
        let _ = writeln!(
            s,
            "quantized parameters: {} ({} saturated, max error {:.3e})",
            qm.report.params, qm.report.saturated, qm.report.max_abs_error
        );
        let _ = writeln!(s, "cancellation ({}): {fixed_db:.2} dB", qm.fmt);
    }
    Ok(s)
}

/// `a..b` (inclusive), `a..=b`, a comma list or a single width.
pub fn parse_widths(text: &str) -> Result<Vec<u32>> {
    let bad = || Error::Config(format!("bad width list {text:?}; use e.g. 8..28 or 17"));
    let num = |t: &str| t.trim().parse::<u32>().map_err(|_| bad());
    let widths: Vec<u32> = if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi) = (num(lo)?, num(hi.trim_start_matches('='))?);
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        text.split(',').map(num).collect::<Result<_>>()?
    };
    for &q in &widths {
        FxFormat::new(q, 0)?;
    }
    Ok(widths)
}

fn cmd_sweep(a: &SweepArgs) -> Result<String> {
    let ds = load_dataset(required(&a.dataset, "--dataset")?)?;
    let out = required(&a.out, "--out")?;
    if a.models.is_empty() {
        return Err(Error::config("--models needs at least one model file"));
    }
    let models = a.models.iter().map(load_model).collect::<Result<Vec<_>>>()?;
    let widths = parse_widths(&a.q)?;
    let split = Split::new(ds.len(), a.fit_fraction)?;
    let rows = sweep_q(&models, &ds.x, &ds.y, widths.iter().copied(), &split, a.input_scaling)?;
    write_file(out, &sweep_to_csv(&rows)?)?;
    let mut s = format!("wrote {} rows to {}\n", rows.len(), out.display());
    for m in &models {
        let float_db = model_cancellation(m, &ds.x, &ds.y, split.eval.clone())?;
        let within =
            saturation_width(&rows, m.name(), float_db, 0.5).map_or_else(|| "none".to_string(), |q| format!("Q{q}"));
        let _ = writeln!(
            s,
            "{}: float {float_db:.2} dB, within 0.5 dB of float from {within}",
            describe(m)
        );
    }
    Ok(s)
}

fn cmd_complexity(a: &ComplexityArgs) -> Result<String> {
    let mut s = render_table(&complexity_table(a.memory, a.order, a.hidden)?);
    let k = crate::cancellers::basis_len(a.memory, a.order);
    let poly_ok = measured_poly_counts(a.memory, a.order, poly_pe_for(k))? == poly_counts(a.memory, a.order)?;
    let nn_ok = measured_nn_counts(a.memory, a.hidden, &NnLayout::for_shape(a.memory, a.hidden))?
        == nn_counts(a.memory, a.hidden)?;
    if !(poly_ok && nn_ok) {
        return Err(Error::Numeric(
            "instrumented datapath counts differ from the closed forms".into(),
        ));
    }
    s.push_str("instrumented datapath counts: match\n");
    Ok(s)
}

fn nn_layout(model: &Model, a: &SimulateArgs) -> Result<NnLayout> {
    let base = NnLayout::for_shape(
        model.memory(),
        match model {
            Model::Nn(m) => m.hidden,
            _ => 1,
        },
    );
    Ok(NnLayout {
        hidden_pe: a.npe_h.unwrap_or(base.hidden_pe),
        output_pe: a.npe_o.unwrap_or(base.output_pe),
        linear_pe: a.npe_lin.unwrap_or(base.linear_pe),
    })
}

/// Simulates `qm` on quantized inputs `xq`; returns the run and the reference outputs.
fn simulate(qm: &QuantizedModel, xq: &[CRaw], opts: &SimOptions) -> Result<(CancellerSimulation, Vec<CRaw>)> {
    let reference = qm.predict_raw(xq, 0..xq.len())?;
    let sim = match &qm.weights {
        Weights::Nn { layout, w } => simulate_nn_canceller(&NnHardware::build(w, *layout, qm.fmt)?, xq, opts)?,
        Weights::Poly { n_pe, w } => simulate_poly_canceller(&PolyHardware::build(w, *n_pe, qm.fmt)?, xq, opts)?,
        Weights::Linear { .. } => return Err(Error::config("only nn and poly cancellers have a pipeline model")),
    };
    Ok((sim, reference))
}

fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> Result<String> {
    if a.kind == ModelKind::Linear {
        return Err(Error::config("simulate supports nn and poly"));
    }
    let ds = load_dataset(required(&a.dataset, "--dataset")?)?;
    let model = load_model(required(&a.model, "--model")?)?;
    if model.kind() != a.kind {
        return Err(Error::Config(format!("model file holds a {} canceller", model.name())));
    }
    let split = Split::new(ds.len(), a.fit_fraction)?;
    let default_q = if a.kind == ModelKind::Nn { 17 } else { 23 };
    let mut qm = quantize(
        &model,
        &ds,
        &split,
        fx_spec(a.fx.as_deref(), default_q)?,
        a.input_scaling,
    )?;
    qm = match a.kind {
        ModelKind::Nn => qm.with_nn_layout(nn_layout(&model, a)?)?,
        _ => {
            let k = crate::cancellers::basis_len(
                model.memory(),
                match &model {
                    Model::Poly(m) => m.order,
                    _ => 1,
                },
            );
            qm.with_poly_pe(a.pe.unwrap_or(poly_pe_for(k)))?
        }
    };
    let start = a.start.unwrap_or(split.eval.start);
    if a.samples == 0 || start + a.samples > ds.len() {
        return Err(Error::Config(format!(
            "samples {start}..{} exceed the {}-sample record",
            start + a.samples,
            ds.len()
        )));
    }
    let range = start..start + a.samples;
    let xq = qm.quantize_input(&ds.x.samples[range.clone()]);
    let opts = SimOptions {
        input_valid: a.input_valid.parse::<Handshake>()?,
        output_ready: a.output_ready.parse::<Handshake>()?,
        max_cycles: a.max_cycles,
        trace: a.trace.is_some(),
    };
    let (sim, reference) = simulate(&qm, &xq, &opts)?;
    let mismatches = sim.outputs.iter().zip(&reference).filter(|(s, r)| s != r).count()
        + sim.outputs.len().abs_diff(reference.len());

    let y = &ds.y.samples[range.clone()];
    let y_hat: Vec<Complex64> = sim.outputs.iter().map(|&c| qm.fmt.complex_to_f64(c)).collect();
    if let Some(path) = &a.out {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "n",
            "y_hat_re_raw",
            "y_hat_im_raw",
            "y_hat_re",
            "y_hat_im",
            "y_re",
            "y_im",
        ])?;
        for (i, (raw, v)) in sim.outputs.iter().zip(&y_hat).enumerate() {
            w.serialize((range.start + i, raw.re, raw.im, v.re, v.im, y[i].re, y[i].im))?;
        }
        w.flush()?;
    }
    if let Some(path) = &a.trace {
        write_file(path, &trace_to_csv(&sim.trace)?)?;
    }

    let r = &sim.report;
    let mut s = format!("canceller: {}\n", describe(&model));
    match &qm.weights {
        Weights::Nn { layout, w } => {
            let (h, o) = layout.stages(w.memory, w.hidden, qm.fmt)?;
            let (ph, po) = (analytic_performance(&h)?, analytic_performance(&o)?);
            let _ = writeln!(
                s,
                "layout: hidden {} PEs ({}), output {} PEs ({}), linear {} complex PEs",
                h.n_pe, h.schedule, o.n_pe, o.schedule, layout.linear_pe
            );
            let _ = writeln!(
                s,
                "stage throughput: T_h = 1/{}, T_o = 1/{}",
                ph.initiation_interval, po.initiation_interval
            );
        }
        Weights::Poly { n_pe, .. } => {
            let _ = writeln!(s, "layout: {n_pe} complex PEs");
        }
        Weights::Linear { .. } => {}
    }
    let _ = writeln!(s, "{}", format_line(&qm));
    let _ = writeln!(s, "samples: {} from index {}", r.samples, range.start);
    let _ = writeln!(s, "latency: {} cycles", r.latency);
    let _ = writeln!(s, "first_output: {} cycles", r.first_output);
    let _ = writeln!(s, "cycles_per_sample: {}", r.cycles_per_sample);
    let _ = writeln!(s, "stall_cycles: {}", r.stall_cycles);
    let _ = writeln!(s, "starved_cycles: {}", r.starved_cycles);
    let _ = writeln!(s, "total_cycles: {}", r.total_cycles);
    for st in &sim.stages {
        let _ = writeln!(
            s,
            "stage {}: latency {}, first_output {}, cycles/sample {}, stalls {}",
            st.name, st.report.latency, st.report.first_output, st.report.cycles_per_sample, st.report.stall_cycles
        );
    }
    let skip = model.memory().min(y.len());
    if skip < y.len() {
        let residual: Vec<Complex64> = y[skip..].iter().zip(&y_hat[skip..]).map(|(a, b)| a - b).collect();
        if let Ok(db) = cancellation_db_slices(&y[skip..], &residual) {
            let _ = writeln!(s, "cancellation: {db:.2} dB");
        }
    }
    let _ = writeln!(s, "bit_exact: {} ({mismatches} mismatches)", mismatches == 0);
    if mismatches > 0 {
        stdout.write_all(s.as_bytes())?;
        return Err(Error::Numeric(format!(
            "{mismatches} simulated samples differ from the reference datapath"
        )));
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub canceller: String,
    pub float_db: f64,
    pub format: Option<String>,
    pub fixed_db: Option<f64>,
    pub mults: u64,
    pub adds: u64,
    pub params: u64,
    pub cycles_per_sample: Option<u64>,
}

fn cmd_compare(a: &CompareArgs) -> Result<String> {
    let ds = load_dataset(required(&a.dataset, "--dataset")?)?;
    let split = Split::new(ds.len(), a.train.fit_fraction)?;
    let mut rows = Vec::new();
    for (kind, q) in [
        (ModelKind::Linear, None),
        (ModelKind::Poly, Some(a.q_poly)),
        (ModelKind::Nn, Some(a.q_nn)),
    ] {
        let spec = FitSpec {
            kind,
            memory: a.memory,
            order: a.order,
            hidden: a.hidden,
            lambda: a.train.lambda,
            train: a.train.train_config(),
        };
        let model = fit_model(&spec, &ds.x, &ds.y, split.fit.clone())?;
        let float_db = model_cancellation(&model, &ds.x, &ds.y, split.eval.clone())?;
        let counts = match kind {
            ModelKind::Linear => linear_counts(a.memory)?,
            ModelKind::Poly => poly_counts(a.memory, a.order)?,
            ModelKind::Nn => nn_counts(a.memory, a.hidden)?,
        };
        let mut row = CompareRow {
            canceller: describe(&model),
            float_db,
            format: None,
            fixed_db: None,
            mults: counts.mults,
            adds: counts.adds,
            params: counts.params,
            cycles_per_sample: None,
        };
        if let Some(q) = q {
            let qm = quantize(&model, &ds, &split, FxSpec::Width(q), a.input_scaling)?;
            row.format = Some(qm.fmt.to_string());
            row.fixed_db = Some(fixed_cancellation(&qm, &ds, &split)?);
            let n = a.sim_samples.clamp(2, split.eval.len());
            let xq = qm.quantize_input(&ds.x.samples[split.eval.start..split.eval.start + n]);
            let (sim, reference) = simulate(&qm, &xq, &SimOptions::default())?;
            if sim.outputs != reference {
                return Err(Error::Numeric(format!(
                    "{} pipeline differs from its reference",
                    model.name()
                )));
            }
            row.cycles_per_sample = Some(sim.report.cycles_per_sample);
        }
        rows.push(row);
    }

    let width = rows.iter().map(|r| r.canceller.len()).max().unwrap_or(9).max(9);
    let mut s = format!(
        "{:<width$}  {:>9}  {:>8}  {:>9}  {:>6}  {:>6}  {:>6}  {:>13}\n",
        "canceller", "float dB", "format", "fixed dB", "mults", "adds", "params", "cycles/sample"
    );
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    for r in &rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>9.2}  {:>8}  {:>9}  {:>6}  {:>6}  {:>6}  {:>13}",
            r.canceller,
            r.float_db,
            opt(r.format.clone()),
            opt(r.fixed_db.map(|v| format!("{v:.2}"))),
            r.mults,
            r.adds,
            r.params,
            opt(r.cycles_per_sample.map(|v| v.to_string()))
        );
    }
    let (lin, poly, nn) = (rows[0].float_db, rows[1].float_db, rows[2].float_db);
    let _ = writeln!(
        s,
        "poly vs nn: {:.2} dB apart; gain over linear: poly {:.2} dB, nn {:.2} dB",
        (poly - nn).abs(),
        lin - poly,
        lin - nn
    );
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_lists() {
        assert_eq!(parse_widths("8..12").unwrap(), vec![8, 9, 10, 11, 12]);
        assert_eq!(parse_widths("8..=9").unwrap(), vec![8, 9]);
        assert_eq!(parse_widths("17").unwrap(), vec![17]);
        assert_eq!(parse_widths("8, 16").unwrap(), vec![8, 16]);
        for bad in ["", "12..8", "x", "8..", "0", "99"] {
            assert!(parse_widths(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "fdsic",
            "fit",
            "poly",
            "--dataset",
            "d",
            "--L",
            "5",
            "--P",
            "3",
            "--out",
            "m",
        ])
        .unwrap();
        match cli.command {
            Command::Fit(a) => assert_eq!((a.kind, a.memory, a.order), (ModelKind::Poly, 5, 3)),
            _ => unreachable!(),
        }
        let cli = Cli::try_parse_from(["fdsic", "complexity", "--print-config"]).unwrap();
        assert!(cli.print_config);
        let mut out = Vec::new();
        run(&cli, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "memory = 13\norder = 7\nhidden = 18\n");
    }

    #[test]
    fn complexity_report() {
        let cli = Cli::try_parse_from(["fdsic", "complexity", "--L", "13", "--P", "7", "--Nh", "18"]).unwrap();
        let mut out = Vec::new();
        run(&cli, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("780") && text.contains("1818") && text.contains("543") && text.contains("611"));
        assert!(text.ends_with("instrumented datapath counts: match\n"));
    }
}
