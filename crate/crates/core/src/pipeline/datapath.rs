//! Arithmetic backends for the bit-exact reference datapath.
//!
//! The reference evaluators in [`super::reference`] are written once against
//! [`Datapath`]. [`FxPath`] gives the fixed-point results the cycle simulator
//! must reproduce, [`RangePath`] runs the same operation sequence in `f64`
//! while recording the largest magnitude seen (format calibration), and
//! [`CountPath`] counts operations.

use crate::fixed::{Cx, FxFormat};

pub trait Datapath {
    type V: Copy + std::fmt::Debug + PartialEq;

    fn zero(&self) -> Self::V;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn neg(&mut self, a: Self::V) -> Self::V;
    fn relu(&mut self, a: Self::V) -> Self::V;
    /// Multiply by `2^s`.
    fn shift(&mut self, a: Self::V, s: i32) -> Self::V;

    fn cadd(&mut self, a: Cx<Self::V>, b: Cx<Self::V>) -> Cx<Self::V> {
        Cx::new(self.add(a.re, b.re), self.add(a.im, b.im))
    }

    /// `w * x` with three multiplications and five additions.
    fn cmul3(&mut self, w: Cx<Self::V>, x: Cx<Self::V>) -> Cx<Self::V> {
        let sum_x = self.add(x.re, x.im);
        let w_diff = self.sub(w.im, w.re);
        let w_sum = self.add(w.re, w.im);
        let k1 = self.mul(w.re, sum_x);
        let k2 = self.mul(x.re, w_diff);
        let k3 = self.mul(x.im, w_sum);
        Cx::new(self.sub(k1, k3), self.add(k1, k2))
    }

    /// Schoolbook complex product.
    fn cmul4(&mut self, a: Cx<Self::V>, b: Cx<Self::V>) -> Cx<Self::V> {
        let rr = self.mul(a.re, b.re);
        let ii = self.mul(a.im, b.im);
        let ri = self.mul(a.re, b.im);
        let ir = self.mul(a.im, b.re);
        Cx::new(self.sub(rr, ii), self.add(ri, ir))
    }

    fn conj(&mut self, a: Cx<Self::V>) -> Cx<Self::V> {
        Cx::new(a.re, self.neg(a.im))
    }

    fn cshift(&mut self, a: Cx<Self::V>, s: i32) -> Cx<Self::V> {
        Cx::new(self.shift(a.re, s), self.shift(a.im, s))
    }
}

/// Saturating fixed-point arithmetic in one format.
#[derive(Debug, Clone, Copy)]
pub struct FxPath {
    pub fmt: FxFormat,
}

impl FxPath {
    pub fn new(fmt: FxFormat) -> Self {
        Self { fmt }
    }
}

impl Datapath for FxPath {
    type V = i64;

    fn zero(&self) -> i64 {
        0
    }
    fn mul(&mut self, a: i64, b: i64) -> i64 {
        self.fmt.mul(a, b)
    }
    fn add(&mut self, a: i64, b: i64) -> i64 {
        self.fmt.add(a, b)
    }
    fn sub(&mut self, a: i64, b: i64) -> i64 {
        self.fmt.sub(a, b)
    }
    fn neg(&mut self, a: i64) -> i64 {
        self.fmt.neg(a)
    }
    fn relu(&mut self, a: i64) -> i64 {
        self.fmt.relu(a)
    }
    fn shift(&mut self, a: i64, s: i32) -> i64 {
        self.fmt.shift(a, s)
    }
    fn cmul3(&mut self, w: Cx<i64>, x: Cx<i64>) -> Cx<i64> {
        self.fmt.cmul3(w, x)
    }
    fn cmul4(&mut self, a: Cx<i64>, b: Cx<i64>) -> Cx<i64> {
        self.fmt.cmul4(a, b)
    }
}

/// Exact `f64` arithmetic that remembers the largest magnitude produced or observed.
#[derive(Debug, Clone, Copy, Default)]
pub struct RangePath {
    pub max_abs: f64,
}

impl RangePath {
    /// Records a value entering the datapath (inputs and parameters).
    pub fn observe(&mut self, v: f64) {
        self.track(v);
    }

    fn track(&mut self, v: f64) -> f64 {
        let a = v.abs();
        if a > self.max_abs || a.is_nan() {
            self.max_abs = a;
        }
        v
    }
}

impl Datapath for RangePath {
    type V = f64;

    fn zero(&self) -> f64 {
        0.0
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        self.track(a * b)
    }
    fn add(&mut self, a: f64, b: f64) -> f64 {
        self.track(a + b)
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        self.track(a - b)
    }
    fn neg(&mut self, a: f64) -> f64 {
        self.track(-a)
    }
    fn relu(&mut self, a: f64) -> f64 {
        a.max(0.0)
    }
    fn shift(&mut self, a: f64, s: i32) -> f64 {
        self.track(a * (s as f64).exp2())
    }
}

/// Counts real multiplications and additions; a subtraction counts as an
/// addition, as does the comparison inside ReLU. Negation and shifts are free.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CountPath {
    pub mults: u64,
    pub adds: u64,
}

impl Datapath for CountPath {
    type V = f64;

    fn zero(&self) -> f64 {
        0.0
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        self.mults += 1;
        a * b
    }
    fn add(&mut self, a: f64, b: f64) -> f64 {
        self.adds += 1;
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        self.adds += 1;
        a - b
    }
    fn neg(&mut self, a: f64) -> f64 {
        -a
    }
    fn relu(&mut self, a: f64) -> f64 {
        self.adds += 1;
        a.max(0.0)
    }
    fn shift(&mut self, a: f64, s: i32) -> f64 {
        a * (s as f64).exp2()
    }
}
