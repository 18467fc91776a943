use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::basis::{self, basis_len, check_order, fill_basis, fill_window, order_pairs, terms_per_delay};
use super::lstsq;
use crate::error::{Error, Result};
use crate::signal::SignalBuffer;

/// Memory-polynomial coefficients `h_{p,q}(l)`, stored delay-major with
/// `(p, q)` in [`basis::order_pairs`] order inside each delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyModel {
    pub memory: usize,
    pub order: usize,
    pub coeffs: Vec<Complex64>,
}

impl PolyModel {
    pub fn new(memory: usize, order: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        let model = Self { memory, order, coeffs };
        model.validate()?;
        Ok(model)
    }

    pub fn zeros(memory: usize, order: usize) -> Result<Self> {
        check_order(order)?;
        Self::new(memory, order, vec![Complex64::new(0.0, 0.0); basis_len(memory, order)])
    }

    pub fn validate(&self) -> Result<()> {
        check_order(self.order)?;
        if self.memory == 0 {
            return Err(Error::config("memory length L must be at least 1"));
        }
        let want = basis_len(self.memory, self.order);
        if self.coeffs.len() != want {
            return Err(Error::shape(format!(
                "polynomial model with L={} P={} needs {want} coefficients, has {}",
                self.memory,
                self.order,
                self.coeffs.len()
            )));
        }
        Ok(())
    }

    pub fn index(&self, l: usize, p: usize, q: usize) -> usize {
        let within = order_pairs(self.order)
            .position(|pq| pq == (p, q))
            .expect("p odd, p <= order and q <= p");
        l * terms_per_delay(self.order) + within
    }

    pub fn coeff(&self, l: usize, p: usize, q: usize) -> Complex64 {
        self.coeffs[self.index(l, p, q)]
    }

    pub fn set_coeff(&mut self, l: usize, p: usize, q: usize, v: Complex64) {
        let i = self.index(l, p, q);
        self.coeffs[i] = v;
    }

    pub fn real_params(&self) -> usize {
        2 * self.coeffs.len()
    }
}

pub fn poly_predict(model: &PolyModel, x: &SignalBuffer) -> SignalBuffer {
    let per = terms_per_delay(model.order);
    // basis values of each input sample, reused across the delay line
    let mut fresh = vec![Complex64::new(0.0, 0.0); per];
    let mut history: Vec<Vec<Complex64>> = Vec::with_capacity(x.len());
    let out = x
        .samples
        .iter()
        .enumerate()
        .map(|(n, &u)| {
            fill_basis(&[u], model.order, &mut fresh);
            history.push(fresh.clone());
            let mut acc = Complex64::new(0.0, 0.0);
            for l in 0..model.memory.min(n + 1) {
                let coeffs = &model.coeffs[l * per..(l + 1) * per];
                for (h, b) in coeffs.iter().zip(&history[n - l]) {
                    acc += h * b;
                }
            }
            acc
        })
        .collect();
    SignalBuffer::new(out, x.sample_rate_hz)
}

pub fn ls_estimate_poly(
    x: &SignalBuffer,
    y: &SignalBuffer,
    memory: usize,
    order: usize,
    lambda: f64,
) -> Result<PolyModel> {
    check_order(order)?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if memory == 0 {
        return Err(Error::config("memory length L must be at least 1"));
    }
    let k = basis_len(memory, order);
    let coeffs = lstsq::solve(k, &y.samples, lambda, |n, row| {
        let mut w = vec![Complex64::new(0.0, 0.0); memory];
        fill_window(&x.samples, n, &mut w);
        basis::fill_basis(&w, order, row);
    })?;
    PolyModel::new(memory, order, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cancellers::linear::{linear_predict, LinearModel};
    use crate::signal::{generate_tx, OfdmConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tx(symbols: usize) -> SignalBuffer {
        generate_tx(&OfdmConfig {
            num_symbols: symbols,
            ..OfdmConfig::default()
        })
        .unwrap()
    }

    fn random_model(memory: usize, order: usize, seed: u64) -> PolyModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..basis_len(memory, order))
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        PolyModel::new(memory, order, coeffs).unwrap()
    }

    #[test]
    fn zero_model_predicts_zero() {
        let x = tx(1);
        let y = poly_predict(&PolyModel::zeros(5, 5).unwrap(), &x);
        assert!(y.samples.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn first_order_q1_terms_reduce_to_fir() {
        let x = tx(1);
        let taps = vec![
            Complex64::new(0.7, 0.2),
            Complex64::new(-0.1, 0.4),
            Complex64::new(0.05, 0.0),
        ];
        let mut model = PolyModel::zeros(3, 1).unwrap();
        for (l, t) in taps.iter().enumerate() {
            model.set_coeff(l, 1, 1, *t);
        }
        let a = poly_predict(&model, &x);
        let b = linear_predict(&LinearModel::new(taps).unwrap(), &x);
        assert_eq!(a, b);
    }

    #[test]
    fn matches_naive_triple_sum() {
        let x = tx(1);
        let model = random_model(4, 5, 3);
        let fast = poly_predict(&model, &x);
        for n in 0..50 {
            let mut naive = Complex64::new(0.0, 0.0);
            for p in (1..=5).step_by(2) {
                for q in 0..=p {
                    for l in 0..4 {
                        if l > n {
                            continue;
                        }
                        let u = x.samples[n - l];
                        naive += model.coeff(l, p, q) * u.powu(q as u32) * u.conj().powu((p - q) as u32);
                    }
                }
            }
            assert!((fast.samples[n] - naive).norm() <= 1e-12 * naive.norm().max(1.0));
        }
    }

    #[test]
    fn recovers_planted_model() {
        let x = tx(20);
        let truth = random_model(3, 5, 11);
        let y = poly_predict(&truth, &x);
        let fit = ls_estimate_poly(&x, &y, 3, 5, 0.0).unwrap();
        let err: f64 = fit
            .coeffs
            .iter()
            .zip(&truth.coeffs)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let norm: f64 = truth.coeffs.iter().map(|b| b.norm_sqr()).sum();
        assert!((err / norm).sqrt() < 1e-6);
    }

    #[test]
    fn zero_target_gives_zero_coefficients() {
        let x = tx(2);
        let y = SignalBuffer::new(vec![Complex64::new(0.0, 0.0); x.len()], x.sample_rate_hz);
        let fit = ls_estimate_poly(&x, &y, 2, 3, 0.0).unwrap();
        assert!(fit.coeffs.iter().all(|c| *c == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn too_short_record_rejected() {
        let x = SignalBuffer::new(vec![Complex64::new(1.0, 0.5); 10], 1.0);
        assert!(ls_estimate_poly(&x, &x, 13, 7, 0.0).is_err());
        assert!(ls_estimate_poly(&x, &x, 1, 2, 0.0).is_err());
    }

    #[test]
    fn validate_checks_coefficient_count() {
        assert!(PolyModel::new(2, 3, vec![Complex64::new(0.0, 0.0); 11]).is_err());
        assert!(PolyModel::new(2, 3, vec![Complex64::new(0.0, 0.0); 12]).is_ok());
    }
}
