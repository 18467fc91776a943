//! Q-bit saturating two's-complement fixed-point arithmetic.
//!
//! Every operation produces a Q-bit result: products keep the full 2Q-bit
//! value, round to nearest (ties away from zero) when dropping `F` fraction
//! bits and then saturate. Additions saturate. Raw values travel as `i64`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FxFormat {
    total_bits: u32,
    frac_bits: u32,
}

impl FxFormat {
    pub const MIN_BITS: u32 = 2;
    pub const MAX_BITS: u32 = 32;

    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        if !(Self::MIN_BITS..=Self::MAX_BITS).contains(&total_bits) {
            return Err(Error::config(format!(
                "fixed-point width must be in {}..={} bits (got {total_bits})",
                Self::MIN_BITS,
                Self::MAX_BITS
            )));
        }
        if frac_bits >= total_bits {
            return Err(Error::config(format!(
                "fraction bits ({frac_bits}) must be smaller than the width ({total_bits})"
            )));
        }
        Ok(Self { total_bits, frac_bits })
    }

    /// Widest fraction that still leaves `int_bits` integer bits (clamped to the
    /// valid range).
    pub fn with_int_bits(total_bits: u32, int_bits: i32) -> Result<Self> {
        let frac = (total_bits as i32 - 1 - int_bits).clamp(0, total_bits as i32 - 1);
        Self::new(total_bits, frac as u32)
    }

    pub fn total_bits(self) -> u32 {
        self.total_bits
    }

    pub fn frac_bits(self) -> u32 {
        self.frac_bits
    }

    pub fn max_raw(self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    pub fn min_raw(self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    pub fn resolution(self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// Raw code of 1.0, when it is representable.
    pub fn one_raw(self) -> Option<i64> {
        let one = 1i64 << self.frac_bits;
        (one <= self.max_raw()).then_some(one)
    }

    pub fn saturate(self, v: i128) -> i64 {
        v.clamp(self.min_raw() as i128, self.max_raw() as i128) as i64
    }

    pub fn contains(self, raw: i64) -> bool {
        (self.min_raw()..=self.max_raw()).contains(&raw)
    }

    pub fn to_f64(self, raw: i64) -> f64 {
        raw as f64 * self.resolution()
    }

    /// Round-to-nearest (ties away from zero), then saturate.
    pub fn quantize_raw(self, v: f64) -> i64 {
        let scaled = (v * (self.frac_bits as f64).exp2()).round();
        if scaled >= self.max_raw() as f64 {
            self.max_raw()
        } else if scaled <= self.min_raw() as f64 {
            self.min_raw()
        } else {
            scaled as i64
        }
    }

    pub fn mul(self, a: i64, b: i64) -> i64 {
        let p = a as i128 * b as i128;
        self.saturate(round_shift_right(p, self.frac_bits))
    }

    pub fn add(self, a: i64, b: i64) -> i64 {
        self.saturate(a as i128 + b as i128)
    }

    pub fn sub(self, a: i64, b: i64) -> i64 {
        self.saturate(a as i128 - b as i128)
    }

    pub fn neg(self, a: i64) -> i64 {
        self.saturate(-(a as i128))
    }

    pub fn mac(self, acc: i64, a: i64, b: i64) -> i64 {
        self.add(acc, self.mul(a, b))
    }

    /// Multiply by `2^shift`: saturating left shift, or rounding right shift.
    pub fn shift(self, a: i64, shift: i32) -> i64 {
        if shift >= 0 {
            // |a| < 2^32 after the clamp, so a 64-bit shift cannot overflow i128
            let a = self.saturate(a as i128);
            self.saturate((a as i128) << shift.min(64))
        } else {
            self.saturate(round_shift_right(a as i128, shift.unsigned_abs().min(100)))
        }
    }

    pub fn relu(self, a: i64) -> i64 {
        a.max(0)
    }
}

/// `v / 2^bits` rounded to nearest, ties away from zero.
fn round_shift_right(v: i128, bits: u32) -> i128 {
    if bits == 0 {
        return v;
    }
    if bits >= 127 {
        return 0;
    }
    let half = 1i128 << (bits - 1);
    let mag = (v.unsigned_abs() as i128 + half) >> bits;
    if v < 0 {
        -mag
    } else {
        mag
    }
}

impl fmt::Display for FxFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.total_bits, self.frac_bits)
    }
}

/// Either a full format (`Q17.12`) or only a width (`Q17`) whose fraction is
/// left to calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FxSpec {
    Full(FxFormat),
    Width(u32),
}

impl FxSpec {
    pub fn total_bits(self) -> u32 {
        match self {
            FxSpec::Full(f) => f.total_bits(),
            FxSpec::Width(q) => q,
        }
    }
}

impl FromStr for FxSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let body = s
            .strip_prefix('Q')
            .or_else(|| s.strip_prefix('q'))
            .ok_or_else(|| Error::config(format!("fixed-point format must look like Q17.12, got {s:?}")))?;
        let parse = |t: &str| {
            t.parse::<u32>()
                .map_err(|_| Error::config(format!("bad number {t:?} in fixed-point format {s:?}")))
        };
        match body.split_once('.') {
            Some((q, f)) => Ok(FxSpec::Full(FxFormat::new(parse(q)?, parse(f)?)?)),
            None => {
                let q = parse(body)?;
                FxFormat::new(q, 0)?;
                Ok(FxSpec::Width(q))
            }
        }
    }
}

impl FromStr for FxFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<FxSpec>()? {
            FxSpec::Full(f) => Ok(f),
            FxSpec::Width(_) => Err(Error::config(format!("{s:?} is missing the fraction bits"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FxValue {
    pub raw: i64,
    pub fmt: FxFormat,
}

impl FxValue {
    pub fn from_raw(raw: i64, fmt: FxFormat) -> Result<Self> {
        if !fmt.contains(raw) {
            return Err(Error::config(format!("raw value {raw} does not fit {fmt}")));
        }
        Ok(Self { raw, fmt })
    }

    pub fn to_f64(self) -> f64 {
        self.fmt.to_f64(self.raw)
    }
}

pub fn quantize(v: f64, fmt: FxFormat) -> FxValue {
    FxValue {
        raw: fmt.quantize_raw(v),
        fmt,
    }
}

fn same_format(a: FxValue, b: FxValue) -> Result<FxFormat> {
    if a.fmt != b.fmt {
        return Err(Error::shape(format!("format mismatch: {} vs {}", a.fmt, b.fmt)));
    }
    Ok(a.fmt)
}

pub fn fx_mul(a: FxValue, b: FxValue) -> Result<FxValue> {
    let fmt = same_format(a, b)?;
    Ok(FxValue {
        raw: fmt.mul(a.raw, b.raw),
        fmt,
    })
}

pub fn fx_add(a: FxValue, b: FxValue) -> Result<FxValue> {
    let fmt = same_format(a, b)?;
    Ok(FxValue {
        raw: fmt.add(a.raw, b.raw),
        fmt,
    })
}

pub fn fx_mac(acc: FxValue, a: FxValue, b: FxValue) -> Result<FxValue> {
    fx_add(acc, fx_mul(a, b)?)
}

/// Complex pair over any scalar representation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cx<T> {
    pub re: T,
    pub im: T,
}

impl<T> Cx<T> {
    pub const fn new(re: T, im: T) -> Self {
        Self { re, im }
    }
}

/// Complex raw pair sharing one [`FxFormat`].
pub type CRaw = Cx<i64>;

impl CRaw {
    pub const ZERO: CRaw = Cx::new(0, 0);
}

impl FxFormat {
    pub fn cadd(self, a: CRaw, b: CRaw) -> CRaw {
        CRaw::new(self.add(a.re, b.re), self.add(a.im, b.im))
    }

    /// Complex product with three real multipliers and five adders:
    /// `k1 = c(a+b)`, `k2 = a(d-c)`, `k3 = b(c+d)`, `re = k1-k3`, `im = k1+k2`
    /// for weight `c+jd` and data `a+jb`.
    pub fn cmul3(self, w: CRaw, x: CRaw) -> CRaw {
        let sum_x = self.add(x.re, x.im);
        let w_diff = self.sub(w.im, w.re);
        let w_sum = self.add(w.re, w.im);
        let k1 = self.mul(w.re, sum_x);
        let k2 = self.mul(x.re, w_diff);
        let k3 = self.mul(x.im, w_sum);
        CRaw::new(self.sub(k1, k3), self.add(k1, k2))
    }

    /// Straight four-multiplier complex product, used by the basis generator.
    pub fn cmul4(self, a: CRaw, b: CRaw) -> CRaw {
        let rr = self.mul(a.re, b.re);
        let ii = self.mul(a.im, b.im);
        let ri = self.mul(a.re, b.im);
        let ir = self.mul(a.im, b.re);
        CRaw::new(self.sub(rr, ii), self.add(ri, ir))
    }

    pub fn conj(self, a: CRaw) -> CRaw {
        CRaw::new(a.re, self.neg(a.im))
    }

    pub fn quantize_complex(self, v: num_complex::Complex64) -> CRaw {
        CRaw::new(self.quantize_raw(v.re), self.quantize_raw(v.im))
    }

    pub fn complex_to_f64(self, v: CRaw) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.to_f64(v.re), self.to_f64(v.im))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fmt(q: u32, f: u32) -> FxFormat {
        FxFormat::new(q, f).unwrap()
    }

    #[test]
    fn format_bounds() {
        assert!(FxFormat::new(1, 0).is_err());
        assert!(FxFormat::new(33, 0).is_err());
        assert!(FxFormat::new(8, 8).is_err());
        let f = fmt(8, 4);
        assert_eq!((f.min_raw(), f.max_raw()), (-128, 127));
        assert_eq!(f.resolution(), 1.0 / 16.0);
        assert_eq!(f.one_raw(), Some(16));
        assert_eq!(fmt(8, 7).one_raw(), None);
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.0, fmt(8, 4)).raw, 0);
        assert_eq!(quantize(9.3, fmt(4, 0)).raw, 7);
        assert_eq!(quantize(-9.3, fmt(4, 0)).raw, -8);
        assert_eq!(quantize(1.23, fmt(8, 4)).raw, 20);
        // ties go away from zero
        assert_eq!(quantize(0.5, fmt(8, 0)).raw, 1);
        assert_eq!(quantize(-0.5, fmt(8, 0)).raw, -1);
        assert_eq!(quantize(2.5, fmt(8, 0)).raw, 3);
    }

    #[test]
    fn mul_by_one_is_identity() {
        let f = fmt(12, 6);
        let one = f.one_raw().unwrap();
        for a in f.min_raw()..=f.max_raw() {
            assert_eq!(f.mul(a, one), a);
        }
    }

    #[test]
    fn saturating_products_and_sums() {
        let f = fmt(8, 0);
        assert_eq!(f.mul(127, 127), 127);
        assert_eq!(f.mul(-128, 127), -128);
        assert_eq!(f.mul(-128, -128), 127);
        assert_eq!(f.add(100, 100), 127);
        assert_eq!(f.add(-100, -100), -128);
        assert_eq!(f.neg(-128), 127);
    }

    #[test]
    fn product_rounding_ties_away() {
        let f = fmt(8, 2);
        // 0.25 * 0.5 = 0.125 -> 0.5 LSB -> rounds to 1 LSB
        assert_eq!(f.mul(1, 2), 1);
        assert_eq!(f.mul(-1, 2), -1);
        // 0.25 * 0.25 = 1/16 -> 0.25 LSB -> 0
        assert_eq!(f.mul(1, 1), 0);
    }

    #[test]
    fn saturating_add_is_not_associative() {
        let f = fmt(4, 0);
        assert_eq!(f.add(f.add(7, 7), -7), 0);
        assert_eq!(f.add(7, f.add(7, -7)), 7);
    }

    #[test]
    fn shifts() {
        let f = fmt(8, 0);
        assert_eq!(f.shift(3, 2), 12);
        assert_eq!(f.shift(100, 2), 127);
        assert_eq!(f.shift(-100, 2), -128);
        assert_eq!(f.shift(6, -2), 2); // 1.5 -> 2
        assert_eq!(f.shift(-6, -2), -2);
        assert_eq!(f.shift(5, -2), 1);
        assert_eq!(f.shift(1, 70), 127);
        assert_eq!(f.shift(0, 70), 0);
        assert_eq!(f.shift(-1, -100), 0);
    }

    #[test]
    fn cmul3_matches_exact_product_without_rounding() {
        let f = fmt(20, 0);
        let w = CRaw::new(3, -7);
        let x = CRaw::new(-5, 11);
        // (3 - 7j)(-5 + 11j) = -15 + 33j + 35j + 77 = 62 + 68j
        assert_eq!(f.cmul3(w, x), CRaw::new(62, 68));
        assert_eq!(f.cmul4(w, x), CRaw::new(62, 68));
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("Q17.12".parse::<FxFormat>().unwrap(), fmt(17, 12));
        assert_eq!(fmt(23, 9).to_string(), "Q23.9");
        assert_eq!("Q17".parse::<FxSpec>().unwrap(), FxSpec::Width(17));
        assert!("17.12".parse::<FxSpec>().is_err());
        assert!("Q17.17".parse::<FxSpec>().is_err());
        assert!("Q40".parse::<FxSpec>().is_err());
        assert!("Q17".parse::<FxFormat>().is_err());
    }

    #[test]
    fn value_ops_check_formats() {
        let a = quantize(1.0, fmt(8, 4));
        let b = quantize(1.0, fmt(8, 3));
        assert!(fx_mul(a, b).is_err());
        assert!(fx_add(a, b).is_err());
        let c = fx_mac(a, a, a).unwrap();
        assert_eq!(c.to_f64(), 2.0);
        assert!(FxValue::from_raw(200, fmt(8, 0)).is_err());
    }

    #[test]
    fn with_int_bits_clamps() {
        assert_eq!(FxFormat::with_int_bits(17, 4).unwrap(), fmt(17, 12));
        assert_eq!(FxFormat::with_int_bits(8, 20).unwrap(), fmt(8, 0));
        assert_eq!(FxFormat::with_int_bits(8, -5).unwrap(), fmt(8, 7));
    }
}
