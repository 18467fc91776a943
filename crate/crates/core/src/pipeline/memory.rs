//! Wide weight memories: one word per compute cycle, one `Q`-bit lane per PE.
//!
//! Lane `p` of a word occupies bits `[p Q, (p + 1) Q)`, lane 0 at the least
//! significant end. Complex stages use two lanes per PE (`2p` real, `2p + 1`
//! imaginary). Memory images are text: a header line
//! `NPE=<lanes> Q=<bits> WORDS=<count>` followed by one hexadecimal word per
//! line, most significant digit first.

use std::path::Path;

use super::config::{Schedule, StageConfig};
use crate::error::{Error, Result};
use crate::fixed::{CRaw, Cx, FxFormat};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedMemory {
    lanes: usize,
    bits: u32,
    limbs_per_word: usize,
    data: Vec<u64>,
}

impl PackedMemory {
    pub fn new(lanes: usize, bits: u32, words: usize) -> Result<Self> {
        if lanes == 0 || !(1..=64).contains(&bits) {
            return Err(Error::config(format!(
                "invalid memory geometry: {lanes} lanes of {bits} bits"
            )));
        }
        let limbs_per_word = (lanes * bits as usize).div_ceil(64);
        Ok(Self {
            lanes,
            bits,
            limbs_per_word,
            data: vec![0; limbs_per_word * words],
        })
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn words(&self) -> usize {
        self.data.len() / self.limbs_per_word
    }

    fn mask(&self) -> u128 {
        (1u128 << self.bits) - 1
    }

    fn window(&self, word: usize, lane: usize) -> (usize, u32) {
        assert!(lane < self.lanes && word < self.words(), "memory access out of range");
        let pos = lane * self.bits as usize;
        (word * self.limbs_per_word + pos / 64, (pos % 64) as u32)
    }

    /// Sign-extended lane value.
    pub fn get(&self, word: usize, lane: usize) -> i64 {
        let (limb, off) = self.window(word, lane);
        let end = (word + 1) * self.limbs_per_word;
        let lo = self.data[limb] as u128;
        let hi = if limb + 1 < end { self.data[limb + 1] as u128 } else { 0 };
        let raw = (((hi << 64) | lo) >> off) & self.mask();
        let shift = 128 - self.bits;
        (((raw << shift) as i128) >> shift) as i64
    }

    /// Stores the low `bits` of `v` (two's complement).
    pub fn set(&mut self, word: usize, lane: usize, v: i64) {
        let (limb, off) = self.window(word, lane);
        let end = (word + 1) * self.limbs_per_word;
        let field = (v as u128) & self.mask();
        let clear = !(self.mask() << off);
        let lo = self.data[limb] as u128;
        let hi = if limb + 1 < end { self.data[limb + 1] as u128 } else { 0 };
        let merged = (((hi << 64) | lo) & clear) | (field << off);
        self.data[limb] = merged as u64;
        if limb + 1 < end {
            self.data[limb + 1] = (merged >> 64) as u64;
        }
    }

    fn hex_digits(&self) -> usize {
        (self.lanes * self.bits as usize).div_ceil(4)
    }

    pub fn word_hex(&self, word: usize) -> String {
        let limbs = &self.data[word * self.limbs_per_word..(word + 1) * self.limbs_per_word];
        let full: String = limbs.iter().rev().map(|l| format!("{l:016x}")).collect();
        full[full.len() - self.hex_digits()..].to_string()
    }

    pub fn to_image(&self) -> String {
        let mut out = format!("NPE={} Q={} WORDS={}\n", self.lanes, self.bits, self.words());
        for w in 0..self.words() {
            out.push_str(&self.word_hex(w));
            out.push('\n');
        }
        out
    }

    pub fn from_image(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty memory image".into()))?;
        let mut fields = [None; 3];
        for part in header.split_whitespace() {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad memory image header {header:?}")))?;
            let slot = match key {
                "NPE" => 0,
                "Q" => 1,
                "WORDS" => 2,
                _ => return Err(Error::Format(format!("unknown header field {key:?}"))),
            };
            fields[slot] = Some(
                value
                    .parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad header value {part:?}")))?,
            );
        }
        let [Some(lanes), Some(bits), Some(words)] = fields else {
            return Err(Error::Format(format!("incomplete memory image header {header:?}")));
        };
        let bits = u32::try_from(bits).map_err(|_| Error::Format("lane width too large".into()))?;
        let mut mem = Self::new(lanes, bits, words).map_err(|e| Error::Format(e.to_string()))?;
        let digits = mem.hex_digits();
        let mut count = 0;
        for (w, line) in lines.enumerate() {
            if w >= words {
                return Err(Error::Format(format!("memory image has more than {words} words")));
            }
            if line.len() != digits || !line.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(Error::Format(format!("word {w} is not {digits} hex digits")));
            }
            for (i, limb) in mem.data[w * mem.limbs_per_word..(w + 1) * mem.limbs_per_word]
                .iter_mut()
                .enumerate()
            {
                let end = digits.saturating_sub(16 * i);
                let start = end.saturating_sub(16);
                *limb = if end == 0 {
                    0
                } else {
                    u64::from_str_radix(&line[start..end], 16).map_err(|e| Error::Format(e.to_string()))?
                };
            }
            count += 1;
        }
        if count != words {
            return Err(Error::Format(format!("memory image has {count} of {words} words")));
        }
        Ok(mem)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_image())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_image(&std::fs::read_to_string(path)?)
    }
}

fn check_range(fmt: FxFormat, values: impl IntoIterator<Item = i64>) -> Result<()> {
    match values.into_iter().find(|&v| !fmt.contains(v)) {
        Some(v) => Err(Error::config(format!("raw value {v} does not fit {fmt}"))),
        None => Ok(()),
    }
}

/// Weight and bias memories of a real dense stage.
///
/// Bias words hold the biases of the neurons finished together: `k` lanes
/// per word for NBN with `k` neurons per group, all `N_n` lanes in one word
/// for IBI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageMemory {
    pub weights: PackedMemory,
    pub biases: PackedMemory,
}

impl StageMemory {
    /// Packs row-major `N_n x N_I` weights and `N_n` biases.
    pub fn pack(cfg: &StageConfig, w: &[i64], b: &[i64]) -> Result<Self> {
        cfg.validate()?;
        if w.len() != cfg.n_inputs * cfg.n_neurons || b.len() != cfg.n_neurons {
            return Err(Error::shape(format!(
                "stage expects {} weights and {} biases, got {} and {}",
                cfg.n_inputs * cfg.n_neurons,
                cfg.n_neurons,
                w.len(),
                b.len()
            )));
        }
        check_range(cfg.fmt, w.iter().chain(b).copied())?;
        let q = cfg.fmt.total_bits();
        let mut weights = PackedMemory::new(cfg.n_pe, q, cfg.words())?;
        for word in 0..cfg.words() {
            for pe in 0..cfg.n_pe {
                let s = cfg.slot(word, pe);
                weights.set(word, pe, w[s.neuron * cfg.n_inputs + s.input]);
            }
        }
        let (lanes, words) = Self::bias_shape(cfg);
        let mut biases = PackedMemory::new(lanes, q, words)?;
        for (j, &v) in b.iter().enumerate() {
            biases.set(j / lanes, j % lanes, v);
        }
        Ok(Self { weights, biases })
    }

    fn bias_shape(cfg: &StageConfig) -> (usize, usize) {
        match cfg.schedule {
            Schedule::Nbn => (cfg.group(), cfg.n_neurons / cfg.group()),
            Schedule::Ibi => (cfg.n_neurons, 1),
        }
    }

    pub fn check(&self, cfg: &StageConfig) -> Result<()> {
        let q = cfg.fmt.total_bits();
        let (lanes, words) = Self::bias_shape(cfg);
        if self.weights.lanes() != cfg.n_pe
            || self.weights.words() != cfg.words()
            || self.weights.bits() != q
            || self.biases.lanes() != lanes
            || self.biases.words() != words
            || self.biases.bits() != q
        {
            return Err(Error::shape("memory geometry does not match the stage configuration"));
        }
        Ok(())
    }

    pub fn weight(&self, word: usize, pe: usize) -> i64 {
        self.weights.get(word, pe)
    }

    pub fn bias(&self, neuron: usize) -> i64 {
        let lanes = self.biases.lanes();
        self.biases.get(neuron / lanes, neuron % lanes)
    }

    /// Row-major weights and biases back from the memory words.
    pub fn unpack(&self, cfg: &StageConfig) -> Result<(Vec<i64>, Vec<i64>)> {
        self.check(cfg)?;
        let mut w = vec![0; cfg.n_inputs * cfg.n_neurons];
        for word in 0..cfg.words() {
            for pe in 0..cfg.n_pe {
                let s = cfg.slot(word, pe);
                w[s.neuron * cfg.n_inputs + s.input] = self.weight(word, pe);
            }
        }
        let b = (0..cfg.n_neurons).map(|j| self.bias(j)).collect();
        Ok((w, b))
    }
}

/// Coefficients of a complex dot product on `n_pe` complex PEs: word `t`
/// holds coefficient `t n_pe + p` for PE `p`, zero past the end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexMemory {
    pub n_pe: usize,
    pub len: usize,
    pub words: PackedMemory,
}

impl ComplexMemory {
    pub fn pack(n_pe: usize, fmt: FxFormat, coeffs: &[CRaw]) -> Result<Self> {
        if n_pe == 0 || coeffs.is_empty() || n_pe > coeffs.len() {
            return Err(Error::config(format!(
                "{n_pe} complex PEs cannot serve {} coefficients",
                coeffs.len()
            )));
        }
        check_range(fmt, coeffs.iter().flat_map(|c| [c.re, c.im]))?;
        let mut words = PackedMemory::new(2 * n_pe, fmt.total_bits(), coeffs.len().div_ceil(n_pe))?;
        for (i, c) in coeffs.iter().enumerate() {
            words.set(i / n_pe, 2 * (i % n_pe), c.re);
            words.set(i / n_pe, 2 * (i % n_pe) + 1, c.im);
        }
        Ok(Self {
            n_pe,
            len: coeffs.len(),
            words,
        })
    }

    pub fn cycles(&self) -> usize {
        self.words.words()
    }

    pub fn coeff(&self, word: usize, pe: usize) -> CRaw {
        Cx::new(self.words.get(word, 2 * pe), self.words.get(word, 2 * pe + 1))
    }

    pub fn unpack(&self) -> Vec<CRaw> {
        (0..self.len)
            .map(|i| self.coeff(i / self.n_pe, i % self.n_pe))
            .collect()
    }
}
