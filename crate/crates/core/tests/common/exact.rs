//! Arbitrary-precision fixed-point oracle: every result is the real value
//! rounded to the `2^-f` grid (nearest, ties away from zero) and clamped to
//! the register.

use super::{Mix, Ox};
use fdsic_core::fixed::{CRaw, Cx, FxFormat};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};

pub struct Exact {
    pub q: u32,
    pub f: u32,
}

impl Exact {
    pub fn lsb(&self) -> BigRational {
        BigRational::new(BigInt::one(), BigInt::one() << self.f)
    }

    pub fn value(&self, raw: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(raw)) * self.lsb()
    }

    pub fn to_raw(&self, v: &BigRational) -> i64 {
        let steps = (v / self.lsb()).round().to_integer();
        let lo = -(BigInt::one() << (self.q - 1));
        let hi = (BigInt::one() << (self.q - 1)) - 1;
        steps.clamp(lo, hi).to_i64().unwrap()
    }

    pub fn mul(&self, a: i64, b: i64) -> i64 {
        self.to_raw(&(self.value(a) * self.value(b)))
    }

    pub fn add(&self, a: i64, b: i64) -> i64 {
        self.to_raw(&(self.value(a) + self.value(b)))
    }

    pub fn sub(&self, a: i64, b: i64) -> i64 {
        self.to_raw(&(self.value(a) - self.value(b)))
    }

    pub fn shift(&self, a: i64, s: i32) -> i64 {
        let k = BigRational::from_integer(BigInt::one() << s.unsigned_abs());
        let v = self.value(a);
        self.to_raw(&if s >= 0 { v * k } else { v / k })
    }

    pub fn quantize(&self, v: f64) -> i64 {
        self.to_raw(&BigRational::from_float(v).unwrap())
    }

    pub fn cmul3(&self, w: CRaw, x: CRaw) -> CRaw {
        let k1 = self.mul(w.re, self.add(x.re, x.im));
        let k2 = self.mul(x.re, self.sub(w.im, w.re));
        let k3 = self.mul(x.im, self.add(w.re, w.im));
        Cx::new(self.sub(k1, k3), self.add(k1, k2))
    }
}

/// Register widths from 2 to 32 bits with integer-only, fraction-only and
/// balanced splits.
pub fn grid() -> Vec<(u32, u32)> {
    let mut g = Vec::new();
    for q in [2, 3, 4, 5, 6, 8, 12, 16, 17, 23, 24, 28, 31, 32] {
        let mut fs = vec![0, 1, q / 2, q - 2, q - 1];
        fs.retain(|&f| f < q);
        fs.sort();
        fs.dedup();
        g.extend(fs.into_iter().map(|f| (q, f)));
    }
    g
}

#[derive(Debug, Default)]
pub struct OpRun {
    pub ops: u64,
    pub mismatches: u64,
    pub first: Option<String>,
}

impl OpRun {
    /// One crate op against the exact result.
    fn op<T: PartialEq + std::fmt::Debug>(&mut self, got: T, want: T, what: impl FnOnce() -> String) {
        self.ops += 1;
        self.oracle(got, want, what);
    }

    /// The integer oracle against the exact result; not counted.
    fn oracle<T: PartialEq + std::fmt::Debug>(&mut self, got: T, want: T, what: impl FnOnce() -> String) {
        if got != want {
            self.mismatches += 1;
            if self.first.is_none() {
                self.first = Some(format!("{}: got {got:?}, want {want:?}", what()));
            }
        }
    }
}

/// Random operands (biased towards the rails) through every scalar op, the
/// three-multiplier complex product and quantization, for both the crate
/// and the integer oracle.
pub fn randomized_ops(seed: u64, per_format: usize) -> OpRun {
    let mut rng = Mix(seed);
    let mut run = OpRun::default();
    for (q, f) in grid() {
        let fmt = FxFormat::new(q, f).unwrap();
        let ex = Exact { q, f };
        let ox = Ox::new(q, f);
        for _ in 0..per_format {
            let (a, b, c) = (rng.edgy(q), rng.edgy(q), rng.edgy(q));
            let tag = |op: &'static str| move || format!("{op} Q{q}.{f} ({a}, {b}, {c})");
            let want = ex.mul(a, b);
            run.op(fmt.mul(a, b), want, tag("mul"));
            run.oracle(ox.mul(a, b), want, tag("oracle mul"));
            let want = ex.add(a, b);
            run.op(fmt.add(a, b), want, tag("add"));
            run.oracle(ox.add(a, b), want, tag("oracle add"));
            run.op(fmt.sub(a, b), ex.sub(a, b), tag("sub"));
            run.op(fmt.neg(a), ex.sub(0, a), tag("neg"));
            run.op(fmt.mac(c, a, b), ex.add(c, ex.mul(a, b)), tag("mac"));
            let s = (rng.next() % 81) as i32 - 40;
            let want = ex.shift(a, s);
            run.op(fmt.shift(a, s), want, || format!("shift Q{q}.{f} {a} by {s}"));
            run.oracle(ox.shift(a, s), want, || format!("oracle shift Q{q}.{f} {a} by {s}"));
            run.op(fmt.relu(a), a.max(0), tag("relu"));
            let span = (1u64 << (q - 1 - f)) as f64 * 1.25;
            let mut v = (rng.next() as f64 / u64::MAX as f64 * 2.0 - 1.0) * span;
            if rng.next() % 8 == 0 {
                // land exactly on a tie
                let scale = (f as f64).exp2();
                v = ((v * scale).trunc() + 0.5) / scale;
            }
            run.op(fmt.quantize_raw(v), ex.quantize(v), || {
                format!("quantize Q{q}.{f} {v:e}")
            });
            let (w, x) = (Cx::new(a, b), Cx::new(c, rng.edgy(q)));
            let want = ex.cmul3(w, x);
            run.op(fmt.cmul3(w, x), want, tag("cmul3"));
            run.oracle(ox.cmul3(w, x), want, tag("oracle cmul3"));
            // the complex product is eight scalar steps
            run.ops += 7;
        }
    }
    run
}
