//! Estimation and training properties of the cancellers, plus the signal
//! chain invariants they rely on.

mod common;

use common::checks::{gradient_error, planted_linear, planted_poly};
use common::Mix;
use fdsic_core::cancellers::nn::nn_train_with_history;
use fdsic_core::cancellers::{
    linear_predict, ls_estimate_linear, ls_estimate_poly, model_from_str, model_to_string, nn_train, poly_predict,
    LinearModel, Model, NnParams, PolyModel, TrainConfig,
};
use fdsic_core::signal::{apply_si_chain, decaying_taps, generate_tx, OfdmConfig, SiChainModel, SignalBuffer};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn noise_like(rng: &mut Mix, n: usize, amp: f64) -> SignalBuffer {
    SignalBuffer::new((0..n).map(|_| c(rng.uniform(), rng.uniform()) * amp).collect(), 20e6)
}

fn tx(symbols: usize, seed: u64) -> SignalBuffer {
    generate_tx(&OfdmConfig {
        num_symbols: symbols,
        seed,
        ..OfdmConfig::default()
    })
    .unwrap()
}

fn sq_residual(y: &SignalBuffer, y_hat: &SignalBuffer) -> f64 {
    y.samples
        .iter()
        .zip(&y_hat.samples)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum()
}

fn random_params(rng: &mut Mix, inputs: usize, hidden: usize) -> NnParams {
    let n = NnParams::zeros(inputs, hidden).param_count();
    let flat: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    NnParams::from_vec(inputs, hidden, &flat).unwrap()
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let worst = gradient_error(41);
    assert!(worst < 1e-5, "worst relative gradient error {worst:e}");
}

#[test]
fn noiseless_ls_recovers_planted_coefficients() {
    for (memory, e) in planted_linear(42) {
        assert!(e < 1e-6, "linear L={memory}: {e:e}");
    }
    for (memory, order, e) in planted_poly(43) {
        assert!(e < 1e-6, "poly L={memory} P={order}: {e:e}");
    }
}

#[test]
fn ls_fits_are_local_minima() {
    let mut rng = Mix(44);
    let x = tx(6, 5);
    let chain = SiChainModel::default();
    let y = apply_si_chain(&chain, &x, 6).unwrap();
    let y = SignalBuffer::new(
        y.samples
            .iter()
            .map(|v| v + c(rng.uniform(), rng.uniform()) * 1e-3)
            .collect(),
        y.sample_rate_hz,
    );

    let lin = ls_estimate_linear(&x, &y, 4).unwrap();
    let base = sq_residual(&y, &linear_predict(&lin, &x));
    for i in 0..lin.taps.len() {
        for d in [c(1e-3, 0.0), c(-1e-3, 0.0), c(0.0, 1e-3), c(0.0, -1e-3)] {
            let mut taps = lin.taps.clone();
            taps[i] += d;
            let moved = sq_residual(&y, &linear_predict(&LinearModel::new(taps).unwrap(), &x));
            assert!(moved >= base, "linear tap {i} {d}");
        }
    }

    let poly = ls_estimate_poly(&x, &y, 3, 3, 0.0).unwrap();
    let base = sq_residual(&y, &poly_predict(&poly, &x));
    for i in 0..poly.coeffs.len() {
        for d in [c(1e-3, 0.0), c(-1e-3, 0.0), c(0.0, 1e-3), c(0.0, -1e-3)] {
            let mut moved = poly.clone();
            moved.coeffs[i] += d;
            assert!(sq_residual(&y, &poly_predict(&moved, &x)) >= base, "poly coeff {i} {d}");
        }
    }
}

#[test]
fn first_order_poly_without_image_is_the_fir() {
    let mut rng = Mix(45);
    let x = noise_like(&mut rng, 400, 1.3);
    for memory in [1, 3, 13] {
        let taps: Vec<Complex64> = (0..memory).map(|_| c(rng.uniform(), rng.uniform())).collect();
        let mut poly = PolyModel::zeros(memory, 1).unwrap();
        for (l, &t) in taps.iter().enumerate() {
            poly.set_coeff(l, 1, 1, t);
        }
        let a = poly_predict(&poly, &x);
        let b = linear_predict(&LinearModel::new(taps).unwrap(), &x);
        assert_eq!(a.samples, b.samples, "L={memory}");
    }
}

fn small_train(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_reproducible() {
    let x = tx(4, 7);
    let y = apply_si_chain(&SiChainModel::default(), &x, 8).unwrap();
    let a = nn_train(&x, &y, 3, 4, &small_train(3, 9)).unwrap();
    let b = nn_train(&x, &y, 3, 4, &small_train(3, 9)).unwrap();
    assert_eq!(a, b);
    let text = model_to_string(&Model::Nn(a.clone())).unwrap();
    assert_eq!(model_from_str(&text).unwrap(), Model::Nn(a.clone()));
    let other = nn_train(&x, &y, 3, 4, &small_train(3, 10)).unwrap();
    assert_ne!(a.net, other.net);
}

#[test]
fn zero_target_is_learned_exactly() {
    let x = tx(3, 11);
    let y = SignalBuffer::new(vec![c(0.0, 0.0); x.len()], x.sample_rate_hz);
    let m = Model::Nn(nn_train(&x, &y, 4, 5, &small_train(5, 1)).unwrap());
    let mse = m.predict(&x).unwrap().mean_power();
    assert!(mse < 1e-10, "{mse:e}");
}

#[test]
fn kept_weights_never_validate_worse_than_the_start() {
    let x = tx(5, 12);
    let y = apply_si_chain(&SiChainModel::default(), &x, 13).unwrap();
    for lr in [1e-4, 3e-3, 0.5] {
        let cfg = TrainConfig {
            learning_rate: lr,
            ..small_train(4, 2)
        };
        let (_, h) = nn_train_with_history(&x, &y, 3, 6, &cfg).unwrap();
        assert!(h.best_val_mse <= h.initial_val_mse, "lr {lr}");
        assert_eq!(h.val_mse.len(), 4);
    }
}

#[test]
fn identity_chain_is_cancelled_to_precision() {
    let x = tx(6, 14);
    let mut chain = SiChainModel::identity();
    let y = apply_si_chain(&chain, &x, 1).unwrap();
    assert_eq!(y.samples, x.samples);
    chain.channel_taps = decaying_taps(5, 0.5, 0.4);
    let y = apply_si_chain(&chain, &x, 1).unwrap();
    for memory in [5, 8] {
        let m = ls_estimate_linear(&x, &y, memory).unwrap();
        let res = sq_residual(&y, &linear_predict(&m, &x));
        let p: f64 = y.samples.iter().map(|v| v.norm_sqr()).sum();
        assert!(res < 1e-12 * p, "L={memory}: {:e}", res / p);
    }
}

#[test]
fn chain_is_causal() {
    let x = tx(2, 15);
    let chain = SiChainModel::default();
    let y = apply_si_chain(&chain, &x, 3).unwrap();
    for k in [0, 17, 100, x.len() - 1] {
        let mut x2 = x.clone();
        x2.samples[k] += c(0.5, -0.25);
        let y2 = apply_si_chain(&chain, &x2, 3).unwrap();
        assert_eq!(y.samples[..k], y2.samples[..k], "perturbing x({k})");
        assert_ne!(y.samples[k], y2.samples[k]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn network_is_homogeneous_in_the_output_weights(seed in any::<u64>(), alpha in 0.01f64..20.0) {
        let mut rng = Mix(seed);
        let p = random_params(&mut rng, 8, 7);
        let input: Vec<f64> = (0..8).map(|_| rng.uniform() * 3.0).collect();
        let mut scaled = p.clone();
        scaled.w2.iter_mut().for_each(|w| *w *= alpha);
        let (a, b) = (p.forward(&input), scaled.forward(&input));
        for k in 0..2 {
            let want = alpha * (a[k] - p.b2[k]);
            let got = b[k] - p.b2[k];
            prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{} vs {}", got, want);
        }
    }

    #[test]
    fn ls_is_linear_in_the_target(seed in any::<u64>(), s in -5.0f64..5.0) {
        let mut rng = Mix(seed);
        let x = noise_like(&mut rng, 120, 1.0);
        let y = noise_like(&mut rng, 120, 1.0);
        let ys = SignalBuffer::new(y.samples.iter().map(|v| v * s).collect(), y.sample_rate_hz);
        let a = ls_estimate_linear(&x, &y, 3).unwrap();
        let b = ls_estimate_linear(&x, &ys, 3).unwrap();
        for (ta, tb) in a.taps.iter().zip(&b.taps) {
            prop_assert!((ta * s - tb).norm() < 1e-9 * (1.0 + tb.norm()));
        }
    }
}
