//! Cycle-stepped simulation of the pipelined cancellers.
//!
//! Stages talk through bounded FIFOs with valid/ready semantics. Every cycle
//! the testbench source runs first, then the stages from the output side
//! back to the input side, so data written in a cycle is seen downstream one
//! cycle later while space freed in a cycle is usable upstream in the same
//! cycle. A stage accepts an input vector and starts computing on it in the
//! same cycle; its adder tree, bias and activation sit behind a pipeline
//! register and fire one cycle after the last multiply-accumulate.
//!
//! Weights are read from the packed memory words, never from the original
//! matrices.

use std::collections::VecDeque;
use std::str::FromStr;

use serde::Serialize;

use super::config::{Activation, NnLayout, Schedule, StageConfig};
use super::memory::{ComplexMemory, StageMemory};
use super::reference::{tree_reduce, NnWeights, PolyWeights};
use crate::cancellers::basis::{basis_len, order_pairs, terms_per_delay};
use crate::error::{Error, Result};
use crate::fixed::{CRaw, Cx, FxFormat};

/// Repeating valid or ready pattern; the empty pattern is always asserted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Handshake {
    pattern: Vec<bool>,
}

impl Handshake {
    pub fn always() -> Self {
        Self::default()
    }

    pub fn pattern(pattern: Vec<bool>) -> Result<Self> {
        if !pattern.is_empty() && !pattern.contains(&true) {
            return Err(Error::config("a handshake pattern must assert at least once"));
        }
        Ok(Self { pattern })
    }

    /// Asserted in cycle `cycle` (1-based).
    pub fn at(&self, cycle: u64) -> bool {
        if self.pattern.is_empty() {
            return true;
        }
        self.pattern[((cycle - 1) % self.pattern.len() as u64) as usize]
    }

    /// Worst-case stretch factor of the pattern.
    fn slowdown(&self) -> u64 {
        if self.pattern.is_empty() {
            return 1;
        }
        let on = self.pattern.iter().filter(|&&b| b).count() as u64;
        (self.pattern.len() as u64).div_ceil(on) + self.pattern.len() as u64
    }
}

impl FromStr for Handshake {
    type Err = Error;

    /// A string of `1` and `0`, e.g. `1101`.
    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                _ => Err(Error::config(format!(
                    "handshake pattern {s:?} may only contain 0 and 1"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::pattern(bits)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub input_valid: Handshake,
    pub output_ready: Handshake,
    /// Cycle budget; `None` derives a generous bound from the workload.
    pub max_cycles: Option<u64>,
    pub trace: bool,
}

/// Timing measured by the simulator, in cycles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CycleReport {
    /// From accepting the first input to producing its complete output, inclusive.
    pub latency: u64,
    /// From accepting the first input to its first output element, inclusive.
    pub first_output: u64,
    /// Steady-state spacing of completed outputs, rounded up.
    pub cycles_per_sample: u64,
    /// Cycles in which finished data could not move on (backpressure).
    pub stall_cycles: u64,
    /// Cycles in which the PEs waited for input after the first one arrived.
    pub starved_cycles: u64,
    pub total_cycles: u64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageReport {
    pub name: &'static str,
    pub report: CycleReport,
}

/// One stage in one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub cycle: u64,
    pub stage: &'static str,
    pub pe_activity: usize,
    pub stall: bool,
    pub outputs_valid: bool,
}

pub fn trace_to_csv(trace: &[TraceRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in trace {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Debug, Default, Clone)]
struct Timeline {
    accepted: Vec<u64>,
    first_out: Vec<u64>,
    done: Vec<u64>,
    stalls: u64,
    starved: u64,
}

impl Timeline {
    fn mark(v: &mut Vec<u64>, tag: usize, cycle: u64) {
        if v.len() <= tag {
            v.resize(tag + 1, 0);
        }
        if v[tag] == 0 {
            v[tag] = cycle;
        }
    }

    fn report(&self, total_cycles: u64) -> CycleReport {
        let n = self.done.len();
        if n == 0 || self.accepted.is_empty() {
            return CycleReport {
                stall_cycles: self.stalls,
                starved_cycles: self.starved,
                total_cycles,
                ..CycleReport::default()
            };
        }
        let latency = self.done[0] - self.accepted[0] + 1;
        let cycles_per_sample = if n >= 2 {
            (self.done[n - 1] - self.done[0]).div_ceil(n as u64 - 1)
        } else {
            latency
        };
        CycleReport {
            latency,
            first_output: self.first_out[0] - self.accepted[0] + 1,
            cycles_per_sample,
            stall_cycles: self.stalls,
            starved_cycles: self.starved,
            total_cycles,
            samples: n,
        }
    }
}

/// Bounded FIFO of whole vectors.
#[derive(Debug)]
struct VecPort<T> {
    q: VecDeque<(usize, Vec<T>)>,
    cap: usize,
}

impl<T> VecPort<T> {
    fn new(cap: usize) -> Self {
        Self {
            q: VecDeque::new(),
            cap,
        }
    }
    fn space(&self) -> usize {
        self.cap - self.q.len()
    }
}

/// Bounded FIFO of `(tag, index, value)` elements.
#[derive(Debug)]
struct ElemPort<T> {
    q: VecDeque<(usize, usize, T)>,
    cap: usize,
}

impl<T> ElemPort<T> {
    fn new(cap: usize) -> Self {
        Self {
            q: VecDeque::new(),
            cap,
        }
    }
    fn space(&self) -> usize {
        self.cap - self.q.len()
    }
}

/// Arithmetic of one PE lane: real or complex.
trait Lane: Copy + std::fmt::Debug {
    fn mac_mul(fmt: FxFormat, w: Self, x: Self) -> Self;
    fn lane_add(fmt: FxFormat, a: Self, b: Self) -> Self;
}

impl Lane for i64 {
    fn mac_mul(fmt: FxFormat, w: i64, x: i64) -> i64 {
        fmt.mul(w, x)
    }
    fn lane_add(fmt: FxFormat, a: i64, b: i64) -> i64 {
        fmt.add(a, b)
    }
}

impl Lane for CRaw {
    fn mac_mul(fmt: FxFormat, w: CRaw, x: CRaw) -> CRaw {
        fmt.cmul3(w, x)
    }
    fn lane_add(fmt: FxFormat, a: CRaw, b: CRaw) -> CRaw {
        fmt.cadd(a, b)
    }
}

/// Where a stage's weights come from.
trait WeightSource<T> {
    fn weight(&self, word: usize, pe: usize) -> T;
    /// Bias and activation applied to neuron `j` after the tree.
    fn finish(&self, fmt: FxFormat, j: usize, v: T) -> T;
}

struct RealWeights<'a> {
    mem: &'a StageMemory,
    activation: Activation,
}

impl WeightSource<i64> for RealWeights<'_> {
    fn weight(&self, word: usize, pe: usize) -> i64 {
        self.mem.weight(word, pe)
    }
    fn finish(&self, fmt: FxFormat, j: usize, v: i64) -> i64 {
        let pre = fmt.add(v, self.mem.bias(j));
        match self.activation {
            Activation::Relu => fmt.relu(pre),
            Activation::Identity => pre,
        }
    }
}

impl WeightSource<CRaw> for &ComplexMemory {
    fn weight(&self, word: usize, pe: usize) -> CRaw {
        self.coeff(word, pe)
    }
    fn finish(&self, _fmt: FxFormat, _j: usize, v: CRaw) -> CRaw {
        v
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct TickInfo {
    active: usize,
    stall: bool,
    outputs_valid: bool,
}

/// Neuron-by-neuron stage. `chunks` may exceed `N_I / N_PE` rounded down, in
/// which case PEs past the end of the input idle in the last chunk.
struct NbnEngine<T, W> {
    name: &'static str,
    fmt: FxFormat,
    n_i: usize,
    n_pe: usize,
    k: usize,
    chunks: usize,
    groups: usize,
    src: W,
    job: Option<(usize, Vec<T>)>,
    group: usize,
    chunk: usize,
    acc: Vec<Option<T>>,
    pipe: Option<(usize, usize, Vec<Option<T>>)>,
    remaining: usize,
    timeline: Timeline,
}

impl<T: Lane, W: WeightSource<T>> NbnEngine<T, W> {
    fn new(name: &'static str, fmt: FxFormat, n_i: usize, n_n: usize, n_pe: usize, src: W, expected: usize) -> Self {
        let k = (n_pe / n_i).max(1);
        Self {
            name,
            fmt,
            n_i,
            n_pe,
            k,
            chunks: n_i.div_ceil(n_pe),
            groups: n_n / k,
            src,
            job: None,
            group: 0,
            chunk: 0,
            acc: vec![None; n_pe],
            pipe: None,
            remaining: expected,
            timeline: Timeline::default(),
        }
    }

    fn input_index(&self, pe: usize) -> Option<usize> {
        if self.k > 1 {
            Some(pe % self.n_i)
        } else {
            let i = self.chunk * self.n_pe + pe;
            (i < self.n_i).then_some(i)
        }
    }

    fn tick(&mut self, cycle: u64, input: &mut VecPort<T>, output: &mut ElemPort<T>) -> TickInfo {
        let mut info = TickInfo::default();
        let fmt = self.fmt;

        if let Some((tag, group, partials)) = &self.pipe {
            if output.space() >= self.k {
                let per = if self.k > 1 { self.n_i } else { self.n_pe };
                for u in 0..self.k {
                    let vals: Vec<T> = partials[u * per..(u + 1) * per].iter().flatten().copied().collect();
                    let sum = tree_reduce(vals, |a, b| T::lane_add(fmt, a, b)).expect("non-empty group");
                    let j = group * self.k + u;
                    output.q.push_back((*tag, j, self.src.finish(fmt, j, sum)));
                }
                Timeline::mark(&mut self.timeline.first_out, *tag, cycle);
                if group + 1 == self.groups {
                    Timeline::mark(&mut self.timeline.done, *tag, cycle);
                }
                info.outputs_valid = true;
                self.pipe = None;
            } else {
                info.stall = true;
            }
        }

        if self.job.is_none() {
            if let Some((tag, x)) = input.q.pop_front() {
                Timeline::mark(&mut self.timeline.accepted, tag, cycle);
                self.job = Some((tag, x));
                self.group = 0;
                self.chunk = 0;
            }
        }

        if let Some((tag, x)) = &self.job {
            let last = self.chunk + 1 == self.chunks;
            if last && self.pipe.is_some() {
                info.stall = true;
            } else {
                let word = self.group * self.chunks + self.chunk;
                for p in 0..self.n_pe {
                    let Some(i) = self.input_index(p) else { continue };
                    let prod = T::mac_mul(fmt, self.src.weight(word, p), x[i]);
                    self.acc[p] = Some(match (self.chunk, self.acc[p]) {
                        (0, _) | (_, None) => prod,
                        (_, Some(a)) => T::lane_add(fmt, a, prod),
                    });
                    info.active += 1;
                }
                if last {
                    let partials = std::mem::replace(&mut self.acc, vec![None; self.n_pe]);
                    self.pipe = Some((*tag, self.group, partials));
                    self.chunk = 0;
                    self.group += 1;
                    if self.group == self.groups {
                        self.job = None;
                        self.remaining -= 1;
                    }
                } else {
                    self.chunk += 1;
                }
            }
        } else if self.remaining > 0 && !self.timeline.accepted.is_empty() {
            self.timeline.starved += 1;
        }
        if info.stall {
            self.timeline.stalls += 1;
        }
        info
    }
}

/// Input-by-input stage over real values.
struct IbiEngine<'a> {
    name: &'static str,
    cfg: StageConfig,
    mem: &'a StageMemory,
    lanes: usize,
    slots: usize,
    steps: usize,
    hold: Vec<i64>,
    tag: usize,
    step: usize,
    slot: usize,
    acc: Vec<Option<i64>>,
    pipe: Option<(usize, Vec<Option<i64>>)>,
    remaining: usize,
    timeline: Timeline,
}

impl<'a> IbiEngine<'a> {
    fn new(name: &'static str, cfg: StageConfig, mem: &'a StageMemory, expected: usize) -> Self {
        let lanes = cfg.group();
        let slots = cfg.cycles_per_group();
        Self {
            name,
            cfg,
            mem,
            lanes,
            slots,
            steps: cfg.n_inputs / lanes,
            hold: Vec::with_capacity(lanes),
            tag: 0,
            step: 0,
            slot: 0,
            acc: vec![None; cfg.n_pe * slots],
            pipe: None,
            remaining: expected,
            timeline: Timeline::default(),
        }
    }

    fn acc_index(&self, pe: usize, slot: usize) -> usize {
        pe * self.slots + slot
    }

    fn tick(&mut self, cycle: u64, input: &mut ElemPort<i64>, output: &mut VecPort<i64>) -> TickInfo {
        let mut info = TickInfo::default();
        let fmt = self.cfg.fmt;
        let (n_n, n_pe) = (self.cfg.n_neurons, self.cfg.n_pe);

        if let Some((tag, acc)) = &self.pipe {
            if output.space() >= 1 {
                let out = (0..n_n)
                    .map(|j| {
                        let vals: Vec<i64> = if self.lanes > 1 {
                            (0..self.lanes).filter_map(|g| acc[g * n_n + j]).collect()
                        } else {
                            acc[self.acc_index(j % n_pe, j / n_pe)].into_iter().collect()
                        };
                        let sum = tree_reduce(vals, |a, b| fmt.add(a, b)).expect("non-empty neuron");
                        let pre = fmt.add(sum, self.mem.bias(j));
                        match self.cfg.activation {
                            Activation::Relu => fmt.relu(pre),
                            Activation::Identity => pre,
                        }
                    })
                    .collect();
                output.q.push_back((*tag, out));
                Timeline::mark(&mut self.timeline.first_out, *tag, cycle);
                Timeline::mark(&mut self.timeline.done, *tag, cycle);
                info.outputs_valid = true;
                self.pipe = None;
            } else {
                info.stall = true;
            }
        }

        if self.remaining > 0 {
            let last = self.step + 1 == self.steps && self.slot + 1 == self.slots;
            let need = if self.slot == 0 { self.lanes } else { 0 };
            if last && self.pipe.is_some() {
                info.stall = true;
            } else if input.q.len() < need {
                if !self.timeline.accepted.is_empty() {
                    self.timeline.starved += 1;
                }
            } else {
                if need > 0 {
                    self.hold.clear();
                    for g in 0..self.lanes {
                        let (tag, idx, v) = input.q.pop_front().expect("length checked");
                        debug_assert_eq!(idx, self.step * self.lanes + g);
                        self.tag = tag;
                        self.hold.push(v);
                    }
                    if self.step == 0 {
                        Timeline::mark(&mut self.timeline.accepted, self.tag, cycle);
                    }
                }
                let word = self.step * self.slots + self.slot;
                for p in 0..n_pe {
                    let s = self.cfg.slot(word, p);
                    let x = self.hold[s.input - self.step * self.lanes];
                    let prod = fmt.mul(self.mem.weight(word, p), x);
                    let a = self.acc_index(p, self.slot);
                    self.acc[a] = Some(match self.acc[a] {
                        Some(v) if self.step > 0 => fmt.add(v, prod),
                        _ => prod,
                    });
                }
                info.active = n_pe;
                self.slot += 1;
                if self.slot == self.slots {
                    self.slot = 0;
                    self.step += 1;
                }
                if self.step == self.steps {
                    let acc = std::mem::replace(&mut self.acc, vec![None; n_pe * self.slots]);
                    self.pipe = Some((self.tag, acc));
                    self.step = 0;
                    self.remaining -= 1;
                }
            }
        }
        if info.stall {
            self.timeline.stalls += 1;
        }
        info
    }
}

fn record(trace: &mut Option<Vec<TraceRecord>>, cycle: u64, stage: &'static str, info: TickInfo) {
    if let Some(t) = trace {
        t.push(TraceRecord {
            cycle,
            stage,
            pe_activity: info.active,
            stall: info.stall,
            outputs_valid: info.outputs_valid,
        });
    }
}

fn budget(opts: &SimOptions, samples: usize, cycles_per_sample: usize) -> u64 {
    opts.max_cycles.unwrap_or_else(|| {
        let base = (samples as u64 + 4) * (cycles_per_sample as u64 + 4) + 64;
        base * opts.input_valid.slowdown() * opts.output_ready.slowdown()
    })
}

fn out_of_budget(limit: u64) -> Error {
    Error::config(format!("simulation did not finish within {limit} cycles"))
}

/// Result of simulating one dense stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSimulation {
    pub outputs: Vec<Vec<i64>>,
    pub report: CycleReport,
    pub trace: Vec<TraceRecord>,
}

/// Streams `inputs` through one dense stage whose weights live in `mem`.
pub fn simulate_stage(
    cfg: &StageConfig,
    mem: &StageMemory,
    inputs: &[Vec<i64>],
    opts: &SimOptions,
) -> Result<StageSimulation> {
    cfg.validate()?;
    mem.check(cfg)?;
    if let Some(bad) = inputs.iter().find(|v| v.len() != cfg.n_inputs) {
        return Err(Error::LengthMismatch {
            expected: cfg.n_inputs,
            found: bad.len(),
        });
    }
    let n = inputs.len();
    let limit = budget(opts, n, cfg.words() + 2);
    let mut trace = opts.trace.then(Vec::new);
    let mut outputs: Vec<Vec<i64>> = Vec::with_capacity(n);
    let mut next = 0;
    let mut cycle = 0;
    let timeline = match cfg.schedule {
        Schedule::Nbn => {
            let src = RealWeights {
                mem,
                activation: cfg.activation,
            };
            let mut eng = NbnEngine::new("nbn", cfg.fmt, cfg.n_inputs, cfg.n_neurons, cfg.n_pe, src, n);
            let mut port = VecPort::new(1);
            let mut out = ElemPort::new(2 * eng.k);
            let mut partial: Vec<i64> = Vec::new();
            while outputs.len() < n {
                cycle += 1;
                if cycle > limit {
                    return Err(out_of_budget(limit));
                }
                if next < n && opts.input_valid.at(cycle) && port.space() > 0 {
                    port.q.push_back((next, inputs[next].clone()));
                    next += 1;
                }
                if opts.output_ready.at(cycle) {
                    for _ in 0..eng.k {
                        let Some((_, _, v)) = out.q.pop_front() else { break };
                        partial.push(v);
                        if partial.len() == cfg.n_neurons {
                            outputs.push(std::mem::take(&mut partial));
                        }
                    }
                }
                let info = eng.tick(cycle, &mut port, &mut out);
                record(&mut trace, cycle, eng.name, info);
            }
            eng.timeline
        }
        Schedule::Ibi => {
            let mut eng = IbiEngine::new("ibi", *cfg, mem, n);
            let mut port = ElemPort::new(2 * cfg.n_inputs);
            let mut out = VecPort::new(1);
            while outputs.len() < n {
                cycle += 1;
                if cycle > limit {
                    return Err(out_of_budget(limit));
                }
                if next < n && opts.input_valid.at(cycle) && port.space() >= cfg.n_inputs {
                    port.q
                        .extend(inputs[next].iter().enumerate().map(|(i, &v)| (next, i, v)));
                    next += 1;
                }
                if opts.output_ready.at(cycle) {
                    if let Some((_, v)) = out.q.pop_front() {
                        outputs.push(v);
                    }
                }
                let info = eng.tick(cycle, &mut port, &mut out);
                record(&mut trace, cycle, eng.name, info);
            }
            eng.timeline
        }
    };
    Ok(StageSimulation {
        outputs,
        report: timeline.report(cycle),
        trace: trace.unwrap_or_default(),
    })
}

/// NN canceller weights laid out in hardware memories.
#[derive(Debug, Clone, PartialEq)]
pub struct NnHardware {
    pub memory: usize,
    pub hidden_units: usize,
    pub layout: NnLayout,
    pub fmt: FxFormat,
    pub denorm_shift: i32,
    pub hidden: StageMemory,
    pub output: StageMemory,
    pub linear: ComplexMemory,
}

impl NnHardware {
    pub fn build(weights: &NnWeights<i64>, layout: NnLayout, fmt: FxFormat) -> Result<Self> {
        weights.check()?;
        let (h, o) = layout.stages(weights.memory, weights.hidden, fmt)?;
        Ok(Self {
            memory: weights.memory,
            hidden_units: weights.hidden,
            layout,
            fmt,
            denorm_shift: weights.denorm_shift,
            hidden: StageMemory::pack(&h, &weights.w1, &weights.b1)?,
            output: StageMemory::pack(&o, &weights.w2, &weights.b2)?,
            linear: ComplexMemory::pack(layout.linear_pe, fmt, &weights.taps)?,
        })
    }

    pub fn stages(&self) -> Result<(StageConfig, StageConfig)> {
        self.layout.stages(self.memory, self.hidden_units, self.fmt)
    }
}

/// Memory-polynomial coefficients laid out for `n_pe` complex PEs.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyHardware {
    pub memory: usize,
    pub order: usize,
    pub fmt: FxFormat,
    pub coeffs: ComplexMemory,
}

impl PolyHardware {
    pub fn build(weights: &PolyWeights<i64>, n_pe: usize, fmt: FxFormat) -> Result<Self> {
        let k = basis_len(weights.memory, weights.order);
        if weights.coeffs.len() != k {
            return Err(Error::shape("polynomial coefficient count does not match (L, P)"));
        }
        if n_pe == 0 || k % n_pe != 0 {
            return Err(Error::config(format!(
                "{k} basis terms cannot be split evenly over {n_pe} complex PEs"
            )));
        }
        Ok(Self {
            memory: weights.memory,
            order: weights.order,
            fmt,
            coeffs: ComplexMemory::pack(n_pe, fmt, &weights.coeffs)?,
        })
    }
}

/// Result of simulating a whole canceller.
#[derive(Debug, Clone, PartialEq)]
pub struct CancellerSimulation {
    pub outputs: Vec<CRaw>,
    pub report: CycleReport,
    pub stages: Vec<StageReport>,
    pub trace: Vec<TraceRecord>,
}

/// Delay line of the last `len` items, newest first, zero-filled.
struct DelayLine<T> {
    items: VecDeque<T>,
}

impl<T: Clone> DelayLine<T> {
    fn new(len: usize, zero: T) -> Self {
        Self {
            items: std::iter::repeat_n(zero, len).collect(),
        }
    }
    fn push(&mut self, v: T) {
        self.items.pop_back();
        self.items.push_front(v);
    }
}

/// Hidden NBN stage and the linear FIR take the input window, the output IBI
/// stage takes the hidden activations, and a combiner adds the FIR output to
/// the shifted network output.
pub fn simulate_nn_canceller(hw: &NnHardware, x: &[CRaw], opts: &SimOptions) -> Result<CancellerSimulation> {
    let (h_cfg, o_cfg) = hw.stages()?;
    hw.hidden.check(&h_cfg)?;
    hw.output.check(&o_cfg)?;
    let n = x.len();
    let fmt = hw.fmt;
    let limit = budget(opts, n, h_cfg.words().max(o_cfg.words()).max(hw.linear.cycles()) + 4);
    let mut trace = opts.trace.then(Vec::new);

    let hidden_src = RealWeights {
        mem: &hw.hidden,
        activation: h_cfg.activation,
    };
    let mut hidden = NbnEngine::new(
        "hidden",
        fmt,
        h_cfg.n_inputs,
        h_cfg.n_neurons,
        h_cfg.n_pe,
        hidden_src,
        n,
    );
    let mut output = IbiEngine::new("output", o_cfg, &hw.output, n);
    let mut fir = NbnEngine::new("linear", fmt, hw.memory, 1, hw.layout.linear_pe, &hw.linear, n);

    let mut hidden_in = VecPort::new(1);
    let mut fir_in = VecPort::new(1);
    let mut mid = ElemPort::new(2 * hidden.k.max(output.lanes));
    let mut nn_out = VecPort::new(2);
    let mut fir_out = ElemPort::new(2);

    let mut window = DelayLine::new(hw.memory, CRaw::ZERO);
    let mut top = Timeline::default();
    let mut outputs = Vec::with_capacity(n);
    let mut next = 0;
    let mut cycle = 0;
    while outputs.len() < n {
        cycle += 1;
        if cycle > limit {
            return Err(out_of_budget(limit));
        }
        if next < n && opts.input_valid.at(cycle) && hidden_in.space() > 0 && fir_in.space() > 0 {
            window.push(x[next]);
            let w: Vec<CRaw> = window.items.iter().copied().collect();
            let split: Vec<i64> = w.iter().map(|c| c.re).chain(w.iter().map(|c| c.im)).collect();
            hidden_in.q.push_back((next, split));
            fir_in.q.push_back((next, w));
            next += 1;
        }

        let mut combine = TickInfo::default();
        if !nn_out.q.is_empty() && !fir_out.q.is_empty() {
            if opts.output_ready.at(cycle) {
                let (tag, o) = nn_out.q.pop_front().expect("checked");
                let (ftag, _, lin) = fir_out.q.pop_front().expect("checked");
                debug_assert_eq!(tag, ftag);
                let net = Cx::new(fmt.shift(o[0], hw.denorm_shift), fmt.shift(o[1], hw.denorm_shift));
                outputs.push(fmt.cadd(lin, net));
                Timeline::mark(&mut top.first_out, tag, cycle);
                Timeline::mark(&mut top.done, tag, cycle);
                combine.outputs_valid = true;
            } else {
                combine.stall = true;
                top.stalls += 1;
            }
        }
        record(&mut trace, cycle, "combine", combine);
        let info = output.tick(cycle, &mut mid, &mut nn_out);
        record(&mut trace, cycle, output.name, info);
        let info = hidden.tick(cycle, &mut hidden_in, &mut mid);
        record(&mut trace, cycle, hidden.name, info);
        let info = fir.tick(cycle, &mut fir_in, &mut fir_out);
        record(&mut trace, cycle, fir.name, info);
    }

    top.accepted = hidden.timeline.accepted.clone();
    let stage_timelines = [
        (hidden.name, &hidden.timeline),
        (output.name, &output.timeline),
        (fir.name, &fir.timeline),
    ];
    let mut report = top.report(cycle);
    report.stall_cycles += stage_timelines.iter().map(|(_, t)| t.stalls).sum::<u64>();
    report.starved_cycles = stage_timelines.iter().map(|(_, t)| t.starved).sum();
    Ok(CancellerSimulation {
        outputs,
        report,
        stages: stage_timelines
            .iter()
            .map(|(name, t)| StageReport {
                name,
                report: t.report(cycle),
            })
            .collect(),
        trace: trace.unwrap_or_default(),
    })
}

/// Basis generator of the input interface: shared powers `|u|^(2a)` and
/// `u^d`, conjugated where needed.
pub fn basis_ladder(fmt: FxFormat, u: CRaw, order: usize) -> Vec<CRaw> {
    let mut upow = vec![u; order + 1];
    for d in 2..=order {
        upow[d] = fmt.cmul4(upow[d - 1], u);
    }
    let half = order / 2;
    let m1 = fmt.add(fmt.mul(u.re, u.re), fmt.mul(u.im, u.im));
    let mut mpow = vec![m1; half + 1];
    for a in 2..=half {
        mpow[a] = fmt.mul(mpow[a - 1], m1);
    }
    order_pairs(order)
        .map(|(p, q)| {
            let a = q.min(p - q);
            let d = p - 2 * a;
            let v = if q >= p - q { upow[d] } else { fmt.conj(upow[d]) };
            if a == 0 {
                v
            } else {
                Cx::new(fmt.mul(mpow[a], v.re), fmt.mul(mpow[a], v.im))
            }
        })
        .collect()
}

/// The input interface expands each sample into its basis terms and shifts
/// them into a delay line; one complex NBN stage computes the dot product.
pub fn simulate_poly_canceller(hw: &PolyHardware, x: &[CRaw], opts: &SimOptions) -> Result<CancellerSimulation> {
    let n = x.len();
    let fmt = hw.fmt;
    let per = terms_per_delay(hw.order);
    let k = basis_len(hw.memory, hw.order);
    let limit = budget(opts, n, hw.coeffs.cycles() + 2);
    let mut trace = opts.trace.then(Vec::new);

    let mut eng = NbnEngine::new("poly", fmt, k, 1, hw.coeffs.n_pe, &hw.coeffs, n);
    let mut port = VecPort::new(1);
    let mut out = ElemPort::new(2);
    let mut history = DelayLine::new(hw.memory, vec![CRaw::ZERO; per]);
    let mut outputs = Vec::with_capacity(n);
    let mut next = 0;
    let mut cycle = 0;
    let mut sink_stalls = 0;
    while outputs.len() < n {
        cycle += 1;
        if cycle > limit {
            return Err(out_of_budget(limit));
        }
        if next < n && opts.input_valid.at(cycle) && port.space() > 0 {
            history.push(basis_ladder(fmt, x[next], hw.order));
            let basis: Vec<CRaw> = history.items.iter().flatten().copied().collect();
            port.q.push_back((next, basis));
            next += 1;
        }
        if !out.q.is_empty() {
            if opts.output_ready.at(cycle) {
                let (_, _, v) = out.q.pop_front().expect("checked");
                outputs.push(v);
            } else {
                sink_stalls += 1;
            }
        }
        let info = eng.tick(cycle, &mut port, &mut out);
        record(&mut trace, cycle, eng.name, info);
    }
    let mut report = eng.timeline.report(cycle);
    report.stall_cycles += sink_stalls;
    Ok(CancellerSimulation {
        outputs,
        report,
        stages: vec![StageReport {
            name: eng.name,
            report: eng.timeline.report(cycle),
        }],
        trace: trace.unwrap_or_default(),
    })
}
