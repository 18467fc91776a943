//! Flat key-value configuration of dataset generation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::signal::{apply_si_chain, decaying_taps, generate_tx, OfdmConfig, SiChainModel};

/// Every knob of `fdsic gen`. Missing keys take their defaults and unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Seeds the transmit symbols; the receiver noise uses `seed + 1`.
    pub seed: u64,
    pub fft_size: usize,
    pub used_subcarriers: usize,
    pub cp_length: usize,
    pub num_symbols: usize,
    pub oversampling: usize,
    pub iq_k1_re: f64,
    pub iq_k1_im: f64,
    pub iq_k2_re: f64,
    pub iq_k2_im: f64,
    pub pa_c1_re: f64,
    pub pa_c1_im: f64,
    pub pa_c3_re: f64,
    pub pa_c3_im: f64,
    pub pa_c5_re: f64,
    pub pa_c5_im: f64,
    pub pa_c7_re: f64,
    pub pa_c7_im: f64,
    /// Channel taps `decay^l exp(j phase_step l)`, normalized to unit energy.
    pub channel_taps: usize,
    pub channel_decay: f64,
    pub channel_phase_step: f64,
    pub noise_power: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        let ofdm = OfdmConfig::default();
        let chain = SiChainModel::default();
        let pa = chain.pa_coeffs;
        Self {
            seed: ofdm.seed,
            fft_size: ofdm.fft_size,
            used_subcarriers: ofdm.used_subcarriers,
            cp_length: ofdm.cp_length,
            num_symbols: ofdm.num_symbols,
            oversampling: ofdm.oversampling,
            iq_k1_re: chain.iq_k1.re,
            iq_k1_im: chain.iq_k1.im,
            iq_k2_re: chain.iq_k2.re,
            iq_k2_im: chain.iq_k2.im,
            pa_c1_re: pa[0].re,
            pa_c1_im: pa[0].im,
            pa_c3_re: pa[1].re,
            pa_c3_im: pa[1].im,
            pa_c5_re: pa[2].re,
            pa_c5_im: pa[2].im,
            pa_c7_re: pa[3].re,
            pa_c7_im: pa[3].im,
            channel_taps: chain.channel_taps.len(),
            channel_decay: 0.6,
            channel_phase_step: 0.7,
            noise_power: chain.noise_power,
        }
    }
}

impl GenConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn ofdm(&self) -> OfdmConfig {
        OfdmConfig {
            fft_size: self.fft_size,
            used_subcarriers: self.used_subcarriers,
            cp_length: self.cp_length,
            num_symbols: self.num_symbols,
            oversampling: self.oversampling,
            seed: self.seed,
        }
    }

    pub fn chain(&self) -> SiChainModel {
        SiChainModel {
            iq_k1: Complex64::new(self.iq_k1_re, self.iq_k1_im),
            iq_k2: Complex64::new(self.iq_k2_re, self.iq_k2_im),
            pa_coeffs: [
                Complex64::new(self.pa_c1_re, self.pa_c1_im),
                Complex64::new(self.pa_c3_re, self.pa_c3_im),
                Complex64::new(self.pa_c5_re, self.pa_c5_im),
                Complex64::new(self.pa_c7_re, self.pa_c7_im),
            ],
            channel_taps: decaying_taps(self.channel_taps, self.channel_decay, self.channel_phase_step),
            noise_power: self.noise_power,
        }
    }

    pub fn noise_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_symbols == 0 {
            return Err(Error::config("num_symbols must be at least 1"));
        }
        if self.channel_taps == 0 {
            return Err(Error::config("channel_taps must be at least 1"));
        }
        let finite = [
            self.iq_k1_re,
            self.iq_k1_im,
            self.iq_k2_re,
            self.iq_k2_im,
            self.pa_c1_re,
            self.pa_c1_im,
            self.pa_c3_re,
            self.pa_c3_im,
            self.pa_c5_re,
            self.pa_c5_im,
            self.pa_c7_re,
            self.pa_c7_im,
            self.channel_decay,
            self.channel_phase_step,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("chain coefficients must be finite"));
        }
        self.ofdm().validate()?;
        self.chain().validate()
    }

    /// Transmit signal and the self-interference it produces.
    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let x = generate_tx(&self.ofdm())?;
        let y = apply_si_chain(&self.chain(), &x, self.noise_seed())?;
        Dataset::new(x, y)
    }
}
