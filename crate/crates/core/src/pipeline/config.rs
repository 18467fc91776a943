use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::FxFormat;

/// Order in which a dense layer walks its `N_n x N_I` weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Neuron-by-neuron: all inputs of one (group of) neuron(s), then the next.
    Nbn,
    /// Input-by-input: one (group of) input(s) across all neurons, then the next.
    Ibi,
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::Nbn => "NBN",
            Schedule::Ibi => "IBI",
        })
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nbn" => Ok(Schedule::Nbn),
            "ibi" => Ok(Schedule::Ibi),
            _ => Err(Error::config(format!("unknown schedule {s:?} (expected NBN or IBI)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" | "none" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::config(format!("unknown activation {s:?}"))),
        }
    }
}

/// One dense stage: `N_n` neurons over `N_I` inputs on `N_PE` multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub schedule: Schedule,
    pub n_inputs: usize,
    pub n_neurons: usize,
    pub n_pe: usize,
    pub fmt: FxFormat,
    pub activation: Activation,
}

/// Where one weight lives: neuron `j`, input `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub neuron: usize,
    pub input: usize,
}

impl StageConfig {
    pub fn new(
        schedule: Schedule,
        n_inputs: usize,
        n_neurons: usize,
        n_pe: usize,
        fmt: FxFormat,
        activation: Activation,
    ) -> Result<Self> {
        let cfg = Self {
            schedule,
            n_inputs,
            n_neurons,
            n_pe,
            fmt,
            activation,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `N_PE` must divide, or be a multiple of, the dimension the schedule
    /// walks in parallel, so that every PE is busy on every cycle.
    pub fn validate(&self) -> Result<()> {
        let (n_i, n_n, n_pe) = (self.n_inputs, self.n_neurons, self.n_pe);
        if n_i == 0 || n_n == 0 || n_pe == 0 {
            return Err(Error::config("stage dimensions and N_PE must be at least 1"));
        }
        if n_pe > n_i * n_n {
            return Err(Error::config(format!(
                "N_PE = {n_pe} exceeds the {} weights of the stage",
                n_i * n_n
            )));
        }
        let ok = match self.schedule {
            Schedule::Nbn if n_pe <= n_i => n_i % n_pe == 0,
            Schedule::Nbn => n_pe % n_i == 0 && n_n % (n_pe / n_i) == 0,
            Schedule::Ibi if n_pe <= n_n => n_n % n_pe == 0,
            Schedule::Ibi => n_pe % n_n == 0 && n_i % (n_pe / n_n) == 0,
        };
        if !ok {
            return Err(Error::config(format!(
                "{} stage with N_I = {n_i}, N_n = {n_n} cannot be mapped evenly onto N_PE = {n_pe}",
                self.schedule
            )));
        }
        Ok(())
    }

    /// Weight-memory words, one per compute cycle: `N_n N_I / N_PE`.
    pub fn words(&self) -> usize {
        self.n_neurons * self.n_inputs / self.n_pe
    }

    /// Neurons finished together (NBN) or inputs consumed together (IBI).
    pub fn group(&self) -> usize {
        match self.schedule {
            Schedule::Nbn => (self.n_pe / self.n_inputs).max(1),
            Schedule::Ibi => (self.n_pe / self.n_neurons).max(1),
        }
    }

    /// Cycles spent on one group: input chunks per neuron (NBN) or neuron
    /// slots per input (IBI).
    pub fn cycles_per_group(&self) -> usize {
        match self.schedule {
            Schedule::Nbn => (self.n_inputs / self.n_pe).max(1),
            Schedule::Ibi => (self.n_neurons / self.n_pe).max(1),
        }
    }

    /// The weight PE `pe` applies in compute cycle `word`.
    pub fn slot(&self, word: usize, pe: usize) -> Slot {
        let (n_i, n_n, n_pe) = (self.n_inputs, self.n_neurons, self.n_pe);
        match self.schedule {
            Schedule::Nbn if n_pe <= n_i => {
                let chunks = n_i / n_pe;
                Slot {
                    neuron: word / chunks,
                    input: (word % chunks) * n_pe + pe,
                }
            }
            Schedule::Nbn => {
                let k = n_pe / n_i;
                Slot {
                    neuron: word * k + pe / n_i,
                    input: pe % n_i,
                }
            }
            Schedule::Ibi if n_pe <= n_n => {
                let slots = n_n / n_pe;
                Slot {
                    neuron: (word % slots) * n_pe + pe,
                    input: word / slots,
                }
            }
            Schedule::Ibi => {
                let lanes = n_pe / n_n;
                Slot {
                    neuron: pe % n_n,
                    input: word * lanes + pe / n_n,
                }
            }
        }
    }
}

/// Closed-form timing of one stage, in cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AnalyticPerformance {
    /// `N_n N_I / N_PE + 1`: compute cycles plus the output interface.
    pub latency: u64,
    /// Cycles between consecutive input vectors in steady state.
    pub initiation_interval: u64,
    /// Cycle of the first output element after accepting an input; `None`
    /// when `N_I / N_PE` is not an integer.
    pub first_output: Option<u64>,
}

impl AnalyticPerformance {
    /// Input vectors per cycle, `N_PE / (N_n N_I)`.
    pub fn throughput(&self) -> f64 {
        1.0 / self.initiation_interval as f64
    }
}

pub fn analytic_performance(stage: &StageConfig) -> Result<AnalyticPerformance> {
    stage.validate()?;
    let compute = stage.words() as u64;
    let first_output = match stage.schedule {
        Schedule::Nbn => (stage.n_inputs % stage.n_pe == 0).then(|| (stage.n_inputs / stage.n_pe) as u64 + 1),
        Schedule::Ibi => Some(compute + 1),
    };
    Ok(AnalyticPerformance {
        latency: compute + 1,
        initiation_interval: compute,
        first_output,
    })
}

/// Processing-element allocation of the NN canceller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NnLayout {
    pub hidden_pe: usize,
    pub output_pe: usize,
    /// Complex PEs of the linear FIR branch.
    pub linear_pe: usize,
}

impl NnLayout {
    /// 52 hidden, 4 output and 2 complex FIR PEs: nine cycles per sample for
    /// `L = 13`, `N_h = 18`.
    pub const REFERENCE: NnLayout = NnLayout {
        hidden_pe: 52,
        output_pe: 4,
        linear_pe: 2,
    };

    /// Hidden (NBN, ReLU) and output (IBI, identity) stage configurations.
    pub fn stages(&self, memory: usize, hidden: usize, fmt: FxFormat) -> Result<(StageConfig, StageConfig)> {
        if self.linear_pe == 0 || self.linear_pe > memory {
            return Err(Error::config(format!(
                "the linear branch needs 1..={memory} PEs, got {}",
                self.linear_pe
            )));
        }
        let h = StageConfig::new(Schedule::Nbn, 2 * memory, hidden, self.hidden_pe, fmt, Activation::Relu)?;
        let o = StageConfig::new(Schedule::Ibi, hidden, 2, self.output_pe, fmt, Activation::Identity)?;
        Ok((h, o))
    }

    pub fn validate(&self, memory: usize, hidden: usize) -> Result<()> {
        self.stages(memory, hidden, FxFormat::new(16, 8)?).map(|_| ())
    }

    /// The reference layout when it fits `(L, N_h)`, otherwise one full
    /// hidden neuron and one output input per cycle.
    pub fn for_shape(memory: usize, hidden: usize) -> Self {
        if Self::REFERENCE.validate(memory, hidden).is_ok() {
            return Self::REFERENCE;
        }
        NnLayout {
            hidden_pe: 2 * memory,
            output_pe: 2,
            linear_pe: memory.min(2),
        }
    }
}

/// Complex PEs of the polynomial canceller.
pub const POLY_REFERENCE_PE: usize = 20;

/// `POLY_REFERENCE_PE` if it divides the basis length, else the largest divisor below it.
pub fn poly_pe_for(basis_len: usize) -> usize {
    (1..=POLY_REFERENCE_PE.min(basis_len.max(1)))
        .rev()
        .find(|d| basis_len % d == 0)
        .unwrap_or(1)
}

/// Cycles per sample of a complex FIR-style stage: `ceil(K / N_PE)`.
pub fn complex_stage_cycles(taps: usize, n_pe: usize) -> usize {
    taps.div_ceil(n_pe)
}
