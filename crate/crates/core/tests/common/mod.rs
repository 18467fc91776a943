//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the crate's arithmetic: the scalar ops are written
//! with truncating division plus a remainder correction, and the datapath
//! oracles are derived from the operation order alone, not from the
//! simulator's slot tables.

#![allow(dead_code)]

pub mod exact;

use fdsic_core::fixed::{CRaw, Cx};
use fdsic_core::pipeline::config::{NnLayout, Schedule};
use fdsic_core::pipeline::reference::{NnWeights, PolyWeights};

/// Saturating Q-bit arithmetic with `f` fraction bits.
#[derive(Debug, Clone, Copy)]
pub struct Ox {
    pub q: u32,
    pub f: u32,
}

impl Ox {
    pub fn new(q: u32, f: u32) -> Self {
        Self { q, f }
    }

    pub fn lo(self) -> i128 {
        -(1i128 << (self.q - 1))
    }

    pub fn hi(self) -> i128 {
        (1i128 << (self.q - 1)) - 1
    }

    pub fn sat(self, v: i128) -> i64 {
        v.max(self.lo()).min(self.hi()) as i64
    }

    /// `v / 2^k`, nearest, ties away from zero.
    pub fn div_pow2(v: i128, k: u32) -> i128 {
        if k == 0 {
            return v;
        }
        let d = 1i128 << k;
        let (quo, rem) = (v / d, v % d);
        if 2 * rem.abs() >= d {
            quo + v.signum()
        } else {
            quo
        }
    }

    pub fn mul(self, a: i64, b: i64) -> i64 {
        self.sat(Self::div_pow2(a as i128 * b as i128, self.f))
    }

    pub fn add(self, a: i64, b: i64) -> i64 {
        self.sat(a as i128 + b as i128)
    }

    pub fn sub(self, a: i64, b: i64) -> i64 {
        self.sat(a as i128 - b as i128)
    }

    pub fn neg(self, a: i64) -> i64 {
        self.sat(-(a as i128))
    }

    pub fn shift(self, a: i64, s: i32) -> i64 {
        let a = self.sat(a as i128) as i128;
        if s >= 0 {
            self.sat(a * (1i128 << s.min(64)))
        } else {
            self.sat(Self::div_pow2(a, s.unsigned_abs().min(100)))
        }
    }

    pub fn cadd(self, a: CRaw, b: CRaw) -> CRaw {
        Cx::new(self.add(a.re, b.re), self.add(a.im, b.im))
    }

    /// Weight `c + jd` times data `a + jb` with three multipliers.
    pub fn cmul3(self, w: CRaw, x: CRaw) -> CRaw {
        let (a, b, c, d) = (x.re, x.im, w.re, w.im);
        let k1 = self.mul(c, self.add(a, b));
        let k2 = self.mul(a, self.sub(d, c));
        let k3 = self.mul(b, self.add(c, d));
        Cx::new(self.sub(k1, k3), self.add(k1, k2))
    }

    pub fn cmul4(self, x: CRaw, y: CRaw) -> CRaw {
        Cx::new(
            self.sub(self.mul(x.re, y.re), self.mul(x.im, y.im)),
            self.add(self.mul(x.re, y.im), self.mul(x.im, y.re)),
        )
    }

    pub fn conj(self, x: CRaw) -> CRaw {
        Cx::new(x.re, self.neg(x.im))
    }
}

/// Pairwise levels, odd tail carried up.
pub fn tree<T: Clone>(mut v: Vec<T>, add: &mut impl FnMut(T, T) -> T) -> T {
    assert!(!v.is_empty());
    while v.len() > 1 {
        let mut next = Vec::with_capacity(v.len().div_ceil(2));
        let mut it = v.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(add(a, b)),
                None => next.push(a),
            }
        }
        v = next;
    }
    v.pop().unwrap()
}

/// Which PE (and hence which partial sum) multiplies input `i` of a neuron.
///
/// NBN with `n_pe <= n_i` deals inputs round robin; with more PEs each
/// neuron owns `n_i` PEs, one input each. IBI with `n_pe <= n_n` gives each
/// neuron one PE for all inputs; with more PEs each neuron owns `n_pe / n_n`
/// lanes that take consecutive inputs round robin.
pub fn input_group(schedule: Schedule, n_i: usize, n_n: usize, n_pe: usize, i: usize) -> usize {
    match schedule {
        Schedule::Nbn if n_pe <= n_i => i % n_pe,
        Schedule::Nbn => i,
        Schedule::Ibi if n_pe <= n_n => 0,
        Schedule::Ibi => i % (n_pe / n_n),
    }
}

/// `act(W x + b)`; every group accumulates in input order from its first
/// product, then the group sums go through the adder tree.
#[allow(clippy::too_many_arguments)]
pub fn dense(
    o: Ox,
    schedule: Schedule,
    n_i: usize,
    n_n: usize,
    n_pe: usize,
    relu: bool,
    w: &[i64],
    b: &[i64],
    x: &[i64],
) -> Vec<i64> {
    (0..n_n)
        .map(|j| {
            let mut groups: Vec<Option<i64>> = vec![None; n_pe.max(n_i)];
            for i in 0..n_i {
                let g = input_group(schedule, n_i, n_n, n_pe, i);
                let p = o.mul(w[j * n_i + i], x[i]);
                groups[g] = Some(match groups[g] {
                    None => p,
                    Some(acc) => o.add(acc, p),
                });
            }
            let partials: Vec<i64> = groups.into_iter().flatten().collect();
            let pre = o.add(tree(partials, &mut |a, b| o.add(a, b)), b[j]);
            if relu {
                pre.max(0)
            } else {
                pre
            }
        })
        .collect()
}

/// Complex dot product; PE `p` handles indices `p, p + n_pe, ...`.
pub fn cdot(o: Ox, n_pe: usize, w: &[CRaw], x: &[CRaw]) -> CRaw {
    let partials: Vec<CRaw> = (0..n_pe.min(w.len()))
        .map(|p| {
            let mut idx = (p..w.len()).step_by(n_pe);
            let first = idx.next().unwrap();
            idx.fold(o.cmul3(w[first], x[first]), |acc, i| o.cadd(acc, o.cmul3(w[i], x[i])))
        })
        .collect();
    tree(partials, &mut |a, b| o.cadd(a, b))
}

/// `u^q conj(u)^(p-q)` for odd `p <= order`, `q = 0..=p`: the power of
/// `u` or `conj(u)` by repeated four-multiplier products, conjugated
/// afterwards, times `|u|^2` raised by repeated products.
pub fn basis(o: Ox, u: CRaw, order: usize) -> Vec<CRaw> {
    let mut out = Vec::new();
    for p in (1..=order).step_by(2) {
        for q in 0..=p {
            let a = q.min(p - q);
            let d = p - 2 * a;
            let mut v = u;
            for _ in 1..d {
                v = o.cmul4(v, u);
            }
            if 2 * q < p {
                v = o.conj(v);
            }
            if a > 0 {
                let m1 = o.add(o.mul(u.re, u.re), o.mul(u.im, u.im));
                let mut m = m1;
                for _ in 1..a {
                    m = o.mul(m, m1);
                }
                v = Cx::new(o.mul(m, v.re), o.mul(m, v.im));
            }
            out.push(v);
        }
    }
    out
}

/// `[x(n), .., x(n-L+1)]`, zero before the record.
pub fn window(x: &[CRaw], n: usize, memory: usize) -> Vec<CRaw> {
    (0..memory)
        .map(|k| if k <= n { x[n - k] } else { Cx::new(0, 0) })
        .collect()
}

pub fn nn_out(o: Ox, w: &NnWeights<i64>, layout: NnLayout, win: &[CRaw]) -> CRaw {
    let l = w.memory;
    let input: Vec<i64> = win.iter().map(|c| c.re).chain(win.iter().map(|c| c.im)).collect();
    let h = dense(
        o,
        Schedule::Nbn,
        2 * l,
        w.hidden,
        layout.hidden_pe,
        true,
        &w.w1,
        &w.b1,
        &input,
    );
    let y = dense(o, Schedule::Ibi, w.hidden, 2, layout.output_pe, false, &w.w2, &w.b2, &h);
    let net = Cx::new(o.shift(y[0], w.denorm_shift), o.shift(y[1], w.denorm_shift));
    o.cadd(cdot(o, layout.linear_pe, &w.taps, win), net)
}

pub fn poly_out(o: Ox, w: &PolyWeights<i64>, n_pe: usize, win: &[CRaw]) -> CRaw {
    let stacked: Vec<CRaw> = win.iter().flat_map(|&u| basis(o, u, w.order)).collect();
    cdot(o, n_pe, &w.coeffs, &stacked)
}

/// Splitmix64, for test data that must not depend on the crate's RNG plumbing.
pub struct Mix(pub u64);

impl Mix {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform raw value of a `q`-bit register.
    pub fn raw(&mut self, q: u32) -> i64 {
        let span = 1u64 << q;
        (self.next() % span) as i64 - (span / 2) as i64
    }

    /// Raw value, biased towards the range ends now and then.
    pub fn edgy(&mut self, q: u32) -> i64 {
        let o = Ox::new(q, 0);
        match self.next() % 16 {
            0 => o.hi() as i64,
            1 => o.lo() as i64,
            2 => 0,
            _ => self.raw(q),
        }
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }

    /// Uniform in [-1, 1].
    pub fn uniform(&mut self) -> f64 {
        self.next() as f64 / u64::MAX as f64 * 2.0 - 1.0
    }

    pub fn complex(&mut self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.uniform(), self.uniform())
    }
}

pub mod checks {
    //! Bit-exactness sweeps shared by the property tests and the acceptance run.

    use super::*;
    use fdsic_core::fixed::FxFormat;
    use fdsic_core::pipeline::config::{analytic_performance, Activation, StageConfig};
    use fdsic_core::pipeline::memory::StageMemory;
    use fdsic_core::pipeline::sim::{
        simulate_nn_canceller, simulate_poly_canceller, simulate_stage, NnHardware, PolyHardware, SimOptions,
    };
    use num_complex::Complex64;

    #[derive(Debug, Default, Clone, Copy)]
    pub struct Tally {
        pub configs: u64,
        pub trials: u64,
        pub mismatches: u64,
        pub timing_mismatches: u64,
    }

    /// Every stage with `N_I, N_n <= 4`, every valid `N_PE`, both schedules,
    /// both activations and every format up to six bits, `vectors` random
    /// inputs each.
    pub fn small_shapes(seed: u64, vectors: usize) -> Tally {
        let mut rng = Mix(seed);
        let mut t = Tally::default();
        for schedule in [Schedule::Nbn, Schedule::Ibi] {
            for n_i in 1..=4 {
                for n_n in 1..=4 {
                    for n_pe in 1..=n_i * n_n {
                        for q in 2..=6u32 {
                            for f in 0..q {
                                for relu in [false, true] {
                                    let act = if relu { Activation::Relu } else { Activation::Identity };
                                    let fmt = FxFormat::new(q, f).unwrap();
                                    let Ok(cfg) = StageConfig::new(schedule, n_i, n_n, n_pe, fmt, act) else {
                                        continue;
                                    };
                                    let w: Vec<i64> = (0..n_i * n_n).map(|_| rng.edgy(q)).collect();
                                    let b: Vec<i64> = (0..n_n).map(|_| rng.edgy(q)).collect();
                                    let xs: Vec<Vec<i64>> =
                                        (0..vectors).map(|_| (0..n_i).map(|_| rng.edgy(q)).collect()).collect();
                                    let mem = StageMemory::pack(&cfg, &w, &b).unwrap();
                                    let sim = simulate_stage(&cfg, &mem, &xs, &SimOptions::default()).unwrap();
                                    let o = Ox::new(q, f);
                                    t.configs += 1;
                                    for (x, y) in xs.iter().zip(&sim.outputs) {
                                        t.trials += 1;
                                        if *y != dense(o, schedule, n_i, n_n, n_pe, relu, &w, &b, x) {
                                            t.mismatches += 1;
                                        }
                                    }
                                    let a = analytic_performance(&cfg).unwrap();
                                    if sim.outputs.len() != vectors
                                        || sim.report.latency != a.latency
                                        || (vectors > 1 && sim.report.cycles_per_sample != a.initiation_interval)
                                    {
                                        t.timing_mismatches += 1;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        t
    }

    /// Random NN weights of a few tenths with a random output shift.
    pub fn random_nn(rng: &mut Mix, memory: usize, hidden: usize, fmt: FxFormat) -> NnWeights<i64> {
        let f = fmt.frac_bits();
        let mut small = |n: usize| (0..n).map(|_| rng.raw(f)).collect::<Vec<i64>>();
        let w1 = small(2 * memory * hidden);
        let b1 = small(hidden);
        let w2 = small(2 * hidden);
        let b2 = small(2);
        let taps = (0..memory).map(|_| Cx::new(rng.raw(f), rng.raw(f))).collect();
        NnWeights {
            memory,
            hidden,
            w1,
            b1,
            w2,
            b2,
            denorm_shift: (rng.next() % 7) as i32 - 4,
            taps,
        }
    }

    pub fn random_input(rng: &mut Mix, n: usize, fmt: FxFormat) -> Vec<CRaw> {
        let bits = fmt.frac_bits() + 1;
        (0..n).map(|_| Cx::new(rng.raw(bits), rng.raw(bits))).collect()
    }

    /// Mismatching samples between the NN pipeline and the oracle.
    pub fn nn_stream(w: &NnWeights<i64>, layout: NnLayout, fmt: FxFormat, x: &[CRaw], opts: &SimOptions) -> (u64, u64) {
        let hw = NnHardware::build(w, layout, fmt).unwrap();
        let sim = simulate_nn_canceller(&hw, x, opts).unwrap();
        let o = Ox::new(fmt.total_bits(), fmt.frac_bits());
        let bad = (0..x.len())
            .filter(|&n| sim.outputs[n] != nn_out(o, w, layout, &window(x, n, w.memory)))
            .count() as u64;
        (bad, sim.report.cycles_per_sample)
    }

    pub fn poly_stream(w: &PolyWeights<i64>, n_pe: usize, fmt: FxFormat, x: &[CRaw], opts: &SimOptions) -> (u64, u64) {
        let hw = PolyHardware::build(w, n_pe, fmt).unwrap();
        let sim = simulate_poly_canceller(&hw, x, opts).unwrap();
        let o = Ox::new(fmt.total_bits(), fmt.frac_bits());
        let bad = (0..x.len())
            .filter(|&n| sim.outputs[n] != poly_out(o, w, n_pe, &window(x, n, w.memory)))
            .count() as u64;
        (bad, sim.report.cycles_per_sample)
    }

    /// `N_n N_I / N_PE + 1`, and the first element after `N_I / N_PE + 1`
    /// (NBN, one neuron at a time), 2 (NBN, several neurons per cycle) or the
    /// full latency (IBI). Returns latency, interval and first output.
    pub fn closed_form(s: Schedule, n_i: usize, n_n: usize, n_pe: usize) -> (u64, u64, u64) {
        let words = (n_n * n_i / n_pe) as u64;
        let first = match s {
            Schedule::Nbn if n_pe <= n_i => (n_i / n_pe) as u64 + 1,
            Schedule::Nbn => 2,
            Schedule::Ibi => words + 1,
        };
        (words + 1, words, first)
    }

    pub const TIMING_SHAPES: [(Schedule, usize, usize, usize); 24] = [
        (Schedule::Nbn, 26, 18, 52),
        (Schedule::Nbn, 26, 18, 26),
        (Schedule::Nbn, 26, 18, 13),
        (Schedule::Nbn, 26, 18, 2),
        (Schedule::Nbn, 26, 18, 1),
        (Schedule::Nbn, 26, 18, 156),
        (Schedule::Nbn, 8, 8, 4),
        (Schedule::Nbn, 8, 8, 16),
        (Schedule::Nbn, 8, 8, 64),
        (Schedule::Nbn, 5, 3, 5),
        (Schedule::Nbn, 5, 3, 15),
        (Schedule::Nbn, 12, 6, 3),
        (Schedule::Ibi, 18, 2, 4),
        (Schedule::Ibi, 18, 2, 2),
        (Schedule::Ibi, 18, 2, 1),
        (Schedule::Ibi, 18, 2, 36),
        (Schedule::Ibi, 18, 2, 12),
        (Schedule::Ibi, 8, 8, 4),
        (Schedule::Ibi, 8, 8, 8),
        (Schedule::Ibi, 8, 8, 32),
        (Schedule::Ibi, 3, 9, 3),
        (Schedule::Ibi, 3, 9, 27),
        (Schedule::Ibi, 10, 4, 20),
        (Schedule::Ibi, 7, 1, 7),
    ];

    /// Simulates every shape of `TIMING_SHAPES` and lists the ones whose
    /// report or analytic model disagrees with `closed_form`.
    pub fn timing_grid(seed: u64) -> Vec<String> {
        let mut rng = Mix(seed);
        let mut bad = Vec::new();
        let fmt = FxFormat::new(16, 8).unwrap();
        for (s, n_i, n_n, n_pe) in TIMING_SHAPES {
            let name = format!("{s} {n_i}x{n_n}/{n_pe}");
            let Ok(cfg) = StageConfig::new(s, n_i, n_n, n_pe, fmt, Activation::Relu) else {
                bad.push(format!("{name}: rejected"));
                continue;
            };
            let w: Vec<i64> = (0..n_i * n_n).map(|_| rng.raw(9)).collect();
            let b: Vec<i64> = (0..n_n).map(|_| rng.raw(9)).collect();
            let xs: Vec<Vec<i64>> = (0..12).map(|_| (0..n_i).map(|_| rng.raw(9)).collect()).collect();
            let mem = StageMemory::pack(&cfg, &w, &b).unwrap();
            let r = simulate_stage(&cfg, &mem, &xs, &SimOptions::default()).unwrap().report;
            let want = closed_form(s, n_i, n_n, n_pe);
            let a = analytic_performance(&cfg).unwrap();
            let got = (r.latency, r.cycles_per_sample, r.first_output);
            if got != want
                || (a.latency, a.initiation_interval) != (want.0, want.1)
                || a.first_output.is_some_and(|f| f != want.2)
                || r.stall_cycles != 0
            {
                bad.push(format!("{name}: simulated {got:?}, closed form {want:?}"));
            }
        }
        bad
    }

    /// Worst relative error between the analytic gradient and central
    /// differences on a 6-input, 5-neuron network.
    pub fn gradient_error(seed: u64) -> f64 {
        use fdsic_core::cancellers::NnParams;
        let mut rng = Mix(seed);
        let (inputs, hidden, rows) = (6, 5, 9);
        let n = NnParams::zeros(inputs, hidden).param_count();
        let flat: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let p = NnParams::from_vec(inputs, hidden, &flat).unwrap();
        let x: Vec<f64> = (0..rows * inputs).map(|_| rng.uniform()).collect();
        let t: Vec<f64> = (0..rows * 2).map(|_| rng.uniform()).collect();
        let analytic = p.loss_and_grad(&x, &t).1.to_vec();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..flat.len() {
            let loss_at = |d: f64| {
                let mut v = flat.clone();
                v[i] += d;
                NnParams::from_vec(inputs, hidden, &v).unwrap().loss_and_grad(&x, &t).0
            };
            let fd = (loss_at(h) - loss_at(-h)) / (2.0 * h);
            let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-3);
            worst = worst.max(rel);
        }
        worst
    }

    fn rel_err(got: &[Complex64], want: &[Complex64]) -> f64 {
        let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = want.iter().map(|b| b.norm_sqr()).sum();
        (num / den).sqrt()
    }

    fn ofdm(symbols: usize, seed: u64) -> fdsic_core::signal::SignalBuffer {
        use fdsic_core::signal::{generate_tx, OfdmConfig};
        generate_tx(&OfdmConfig {
            num_symbols: symbols,
            seed,
            ..OfdmConfig::default()
        })
        .unwrap()
    }

    /// Noiseless least squares on planted FIR taps; `(L, relative error)`.
    pub fn planted_linear(seed: u64) -> Vec<(usize, f64)> {
        use fdsic_core::cancellers::{linear_predict, ls_estimate_linear, LinearModel};
        let mut rng = Mix(seed);
        let x = ofdm(12, 3);
        [1, 4, 13]
            .into_iter()
            .map(|memory| {
                let taps: Vec<Complex64> = (0..memory).map(|_| rng.complex()).collect();
                let y = linear_predict(&LinearModel::new(taps.clone()).unwrap(), &x);
                let fit = ls_estimate_linear(&x, &y, memory).unwrap();
                (memory, rel_err(&fit.taps, &taps))
            })
            .collect()
    }

    /// Noiseless least squares on planted polynomial coefficients;
    /// `(L, P, relative error)`.
    pub fn planted_poly(seed: u64) -> Vec<(usize, usize, f64)> {
        use fdsic_core::cancellers::{basis_len, ls_estimate_poly, poly_predict, PolyModel};
        let mut rng = Mix(seed);
        let x = ofdm(40, 4);
        [(1, 1), (3, 3), (4, 5), (2, 7)]
            .into_iter()
            .map(|(memory, order)| {
                let coeffs: Vec<Complex64> = (0..basis_len(memory, order)).map(|_| rng.complex() * 0.3).collect();
                let y = poly_predict(&PolyModel::new(memory, order, coeffs.clone()).unwrap(), &x);
                let fit = ls_estimate_poly(&x, &y, memory, order, 0.0).unwrap();
                (memory, order, rel_err(&fit.coeffs, &coeffs))
            })
            .collect()
    }
}
