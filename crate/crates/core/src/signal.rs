//! Transmit signal generation and the synthetic self-interference chain.
//!
//! The transmit signal is a QPSK-modulated OFDM stream. The received
//! self-interference is produced by a Hammerstein chain: IQ imbalance, a
//! memoryless odd-order power amplifier polynomial, then a causal FIR
//! coupling channel and circular Gaussian noise.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexSample = Complex64;

/// Sample rate of the OFDM stream before oversampling.
pub const BASE_SAMPLE_RATE_HZ: f64 = 10.0e6;

/// PA polynomial orders carried by [`SiChainModel::pa_coeffs`].
pub const PA_ORDERS: [u32; 4] = [1, 3, 5, 7];

#[derive(Debug, Clone, PartialEq)]
pub struct SignalBuffer {
    pub samples: Vec<ComplexSample>,
    pub sample_rate_hz: f64,
}

impl SignalBuffer {
    pub fn new(samples: Vec<ComplexSample>, sample_rate_hz: f64) -> Self {
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }

    /// Copy of samples `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self::new(self.samples[range].to_vec(), self.sample_rate_hz)
    }

    /// Rejects buffers holding NaN or infinite components.
    pub fn check_finite(&self) -> Result<()> {
        match self.samples.iter().position(|s| !s.re.is_finite() || !s.im.is_finite()) {
            Some(n) => Err(Error::Numeric(format!("non-finite sample at index {n}"))),
            None => Ok(()),
        }
    }
}

pub fn mean_power(samples: &[ComplexSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub fft_size: usize,
    pub used_subcarriers: usize,
    pub cp_length: usize,
    pub num_symbols: usize,
    pub oversampling: usize,
    pub seed: u64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            fft_size: 64,
            used_subcarriers: 52,
            cp_length: 16,
            num_symbols: 300,
            oversampling: 2,
            seed: 7,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 {
            return Err(Error::config("fft_size must be at least 2"));
        }
        if self.used_subcarriers == 0 || self.used_subcarriers >= self.fft_size {
            return Err(Error::config(format!(
                "used_subcarriers must be in 1..{} (got {})",
                self.fft_size, self.used_subcarriers
            )));
        }
        if self.cp_length >= self.fft_size {
            return Err(Error::config("cp_length must be smaller than fft_size"));
        }
        if self.oversampling == 0 {
            return Err(Error::config("oversampling must be at least 1"));
        }
        Ok(())
    }

    pub fn sample_rate_hz(&self) -> f64 {
        BASE_SAMPLE_RATE_HZ * self.oversampling as f64
    }

    pub fn output_len(&self) -> usize {
        self.num_symbols * (self.fft_size + self.cp_length) * self.oversampling
    }
}

/// QPSK OFDM transmit signal, scaled to unit mean power.
///
/// Used subcarriers straddle DC (which stays empty); oversampling is done by
/// zero-padding the spectrum before the inverse FFT.
pub fn generate_tx(config: &OfdmConfig) -> Result<SignalBuffer> {
    config.validate()?;
    let n_fft = config.fft_size * config.oversampling;
    let n_cp = config.cp_length * config.oversampling;
    let positive = config.used_subcarriers.div_ceil(2);
    let negative = config.used_subcarriers / 2;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n_fft);
    let amp = std::f64::consts::FRAC_1_SQRT_2;

    let mut out = Vec::with_capacity(config.output_len());
    let mut bins = vec![Complex64::new(0.0, 0.0); n_fft];
    for _ in 0..config.num_symbols {
        bins.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        let carriers = (1..=positive).chain((1..=negative).map(|k| n_fft - k));
        for bin in carriers {
            let re = if rng.random::<bool>() { amp } else { -amp };
            let im = if rng.random::<bool>() { amp } else { -amp };
            bins[bin] = Complex64::new(re, im);
        }
        ifft.process(&mut bins);
        out.extend_from_slice(&bins[n_fft - n_cp..]);
        out.extend_from_slice(&bins);
    }

    let power = mean_power(&out);
    if power > 0.0 {
        let scale = power.sqrt().recip();
        out.iter_mut().for_each(|s| *s *= scale);
    }
    Ok(SignalBuffer::new(out, config.sample_rate_hz()))
}

/// Transceiver impairments producing the self-interference observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiChainModel {
    pub iq_k1: Complex64,
    pub iq_k2: Complex64,
    /// Coefficients for PA orders 1, 3, 5, 7.
    pub pa_coeffs: [Complex64; 4],
    pub channel_taps: Vec<Complex64>,
    /// Linear noise power relative to a unit-power transmit signal.
    pub noise_power: f64,
}

impl Default for SiChainModel {
    fn default() -> Self {
        Self {
            iq_k1: Complex64::new(1.0, 0.0),
            iq_k2: Complex64::from_polar(0.05, 0.3),
            pa_coeffs: [
                Complex64::new(1.0, 0.0),
                Complex64::from_polar(0.0015, -0.2),
                Complex64::new(2.0e-4, 0.0),
                Complex64::new(1.0e-5, 0.0),
            ],
            channel_taps: decaying_taps(8, 0.6, 0.7),
            noise_power: 5.0e-5,
        }
    }
}

/// `count` taps `decay^l * exp(j * phase_step * l)`, scaled to unit energy.
pub fn decaying_taps(count: usize, decay: f64, phase_step: f64) -> Vec<Complex64> {
    // compile-time folding of sin/cos can differ in the last bit from the
    // runtime libm; keep it at run time so every caller gets the same taps
    let (decay, phase_step) = std::hint::black_box((decay, phase_step));
    let mut taps: Vec<Complex64> = (0..count)
        .map(|l| Complex64::from_polar(decay.powi(l as i32), phase_step * l as f64))
        .collect();
    let energy: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
    if energy > 0.0 {
        let scale = energy.sqrt().recip();
        taps.iter_mut().for_each(|t| *t *= scale);
    }
    taps
}

impl SiChainModel {
    /// Chain without impairments: `y = x`.
    pub fn identity() -> Self {
        Self {
            iq_k1: Complex64::new(1.0, 0.0),
            iq_k2: Complex64::new(0.0, 0.0),
            pa_coeffs: [
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
            channel_taps: vec![Complex64::new(1.0, 0.0)],
            noise_power: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iq_k2.norm() >= self.iq_k1.norm() {
            return Err(Error::config("|iq_k2| must be smaller than |iq_k1|"));
        }
        if self.channel_taps.is_empty() {
            return Err(Error::config("channel_taps must not be empty"));
        }
        if !self.noise_power.is_finite() || self.noise_power < 0.0 {
            return Err(Error::config("noise_power must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn iq(&self, u: Complex64) -> Complex64 {
        self.iq_k1 * u + self.iq_k2 * u.conj()
    }

    pub fn pa(&self, u: Complex64) -> Complex64 {
        let mag2 = u.norm_sqr();
        let mut envelope = 1.0;
        let mut acc = Complex64::new(0.0, 0.0);
        for c in &self.pa_coeffs {
            acc += c * u * envelope;
            envelope *= mag2;
        }
        acc
    }
}

/// Pass `x` through the chain; history before the first sample is zero.
pub fn apply_si_chain(model: &SiChainModel, x: &SignalBuffer, seed: u64) -> Result<SignalBuffer> {
    model.validate()?;
    if x.is_empty() {
        return Err(Error::config("apply_si_chain needs a non-empty input"));
    }
    let distorted: Vec<Complex64> = x.samples.iter().map(|&s| model.pa(model.iq(s))).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = (model.noise_power / 2.0).sqrt();
    let y = (0..distorted.len())
        .map(|n| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (l, tap) in model.channel_taps.iter().enumerate().take(n + 1) {
                acc += tap * distorted[n - l];
            }
            if sigma > 0.0 {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                acc += Complex64::new(re, im) * sigma;
            }
            acc
        })
        .collect();
    Ok(SignalBuffer::new(y, x.sample_rate_hz))
}
