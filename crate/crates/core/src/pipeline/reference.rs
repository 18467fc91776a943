//! Functional model of the hardware datapath.
//!
//! Each evaluator performs exactly the operation sequence of the pipelined
//! hardware: per-PE accumulation starting from the first product, a pairwise
//! adder tree over PE partials in ascending PE order, then bias and activation.
//! Run on [`FxPath`](super::datapath::FxPath) it defines the bit-exact result
//! the cycle simulator must reproduce.

use serde::{Deserialize, Serialize};

use super::config::{Activation, StageConfig};
use super::datapath::Datapath;
use crate::cancellers::basis::order_pairs;
use crate::error::{Error, Result};
use crate::fixed::Cx;

/// Level-wise pairwise reduction: `(v0+v1), (v2+v3), ...`, an odd last
/// element is carried to the next level unchanged.
pub fn tree_reduce<T: Clone>(mut vals: Vec<T>, mut add: impl FnMut(T, T) -> T) -> Option<T> {
    while vals.len() > 1 {
        let next = vals
            .chunks(2)
            .map(|c| {
                if c.len() == 2 {
                    add(c[0].clone(), c[1].clone())
                } else {
                    c[0].clone()
                }
            })
            .collect();
        vals = next;
    }
    vals.pop()
}

/// Dense layer `act(W x + b)`, `w` row-major `N_n x N_I`.
pub fn dense<D: Datapath>(dp: &mut D, cfg: &StageConfig, w: &[D::V], b: &[D::V], x: &[D::V]) -> Vec<D::V> {
    let (n_i, n_n, n_pe) = (cfg.n_inputs, cfg.n_neurons, cfg.n_pe);
    debug_assert_eq!(w.len(), n_i * n_n);
    debug_assert_eq!(x.len(), n_i);
    let mut acc: Vec<Option<D::V>> = vec![None; n_n * n_pe];
    for word in 0..cfg.words() {
        for p in 0..n_pe {
            let s = cfg.slot(word, p);
            let prod = dp.mul(w[s.neuron * n_i + s.input], x[s.input]);
            let a = &mut acc[s.neuron * n_pe + p];
            *a = Some(match *a {
                None => prod,
                Some(v) => dp.add(v, prod),
            });
        }
    }
    (0..n_n)
        .map(|j| {
            let partials: Vec<D::V> = acc[j * n_pe..(j + 1) * n_pe].iter().flatten().copied().collect();
            let sum = tree_reduce(partials, |a, b| dp.add(a, b)).expect("every neuron has a PE");
            let pre = dp.add(sum, b[j]);
            match cfg.activation {
                Activation::Relu => dp.relu(pre),
                Activation::Identity => pre,
            }
        })
        .collect()
}

/// `sum w[i] x[i]` on `n_pe` complex PEs; PE `p` takes indices `p, p + n_pe, ...`.
pub fn complex_dot<D: Datapath>(dp: &mut D, n_pe: usize, w: &[Cx<D::V>], x: &[Cx<D::V>]) -> Cx<D::V> {
    debug_assert_eq!(w.len(), x.len());
    let partials: Vec<Cx<D::V>> = (0..n_pe.min(w.len()))
        .map(|p| {
            let mut acc = dp.cmul3(w[p], x[p]);
            for i in (p + n_pe..w.len()).step_by(n_pe) {
                let prod = dp.cmul3(w[i], x[i]);
                acc = dp.cadd(acc, prod);
            }
            acc
        })
        .collect();
    let zero = Cx::new(dp.zero(), dp.zero());
    tree_reduce(partials, |a, b| dp.cadd(a, b)).unwrap_or(zero)
}

/// Memory-polynomial basis of one sample in canonical `(p, q)` order.
///
/// `u^q conj(u)^(p-q) = |u|^(2a) v^d` with `a = min(q, p-q)`, `d = |2q - p|`
/// and `v = u` or `conj(u)`; `|u|^(2a)` and `v^d` are repeated products.
pub fn basis_terms<D: Datapath>(dp: &mut D, u: Cx<D::V>, order: usize) -> Vec<Cx<D::V>> {
    order_pairs(order)
        .map(|(p, q)| {
            let a = q.min(p - q);
            let d = p - 2 * a;
            let mut v = u;
            for _ in 1..d {
                v = dp.cmul4(v, u);
            }
            if q < p - q {
                v = dp.conj(v);
            }
            if a == 0 {
                return v;
            }
            let rr = dp.mul(u.re, u.re);
            let ii = dp.mul(u.im, u.im);
            let m1 = dp.add(rr, ii);
            let mut m = m1;
            for _ in 1..a {
                m = dp.mul(m, m1);
            }
            Cx::new(dp.mul(m, v.re), dp.mul(m, v.im))
        })
        .collect()
}

/// Linear FIR taps as seen by the datapath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearWeights<V> {
    pub taps: Vec<Cx<V>>,
}

/// Memory-polynomial coefficients, delay-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyWeights<V> {
    pub memory: usize,
    pub order: usize,
    pub coeffs: Vec<Cx<V>>,
}

/// NN canceller parameters: hidden `w1` is `N_h x 2L`, output `w2` is `2 x N_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnWeights<V> {
    pub memory: usize,
    pub hidden: usize,
    pub w1: Vec<V>,
    pub b1: Vec<V>,
    pub w2: Vec<V>,
    pub b2: Vec<V>,
    pub denorm_shift: i32,
    pub taps: Vec<Cx<V>>,
}

impl<V: Copy> LinearWeights<V> {
    pub fn map<U>(&self, mut f: impl FnMut(V) -> U) -> LinearWeights<U> {
        LinearWeights {
            taps: self.taps.iter().map(|c| Cx::new(f(c.re), f(c.im))).collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = V> + '_ {
        self.taps.iter().flat_map(|c| [c.re, c.im])
    }
}

impl<V: Copy> PolyWeights<V> {
    pub fn map<U>(&self, mut f: impl FnMut(V) -> U) -> PolyWeights<U> {
        PolyWeights {
            memory: self.memory,
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| Cx::new(f(c.re), f(c.im))).collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = V> + '_ {
        self.coeffs.iter().flat_map(|c| [c.re, c.im])
    }
}

impl<V: Copy> NnWeights<V> {
    pub fn map<U>(&self, mut f: impl FnMut(V) -> U) -> NnWeights<U> {
        let mut m = |v: &[V]| v.iter().map(|&x| f(x)).collect::<Vec<U>>();
        let w1 = m(&self.w1);
        let b1 = m(&self.b1);
        let w2 = m(&self.w2);
        let b2 = m(&self.b2);
        let flat: Vec<V> = self.taps.iter().flat_map(|c| [c.re, c.im]).collect();
        let flat = m(&flat);
        let mut it = flat.into_iter();
        let taps = std::iter::from_fn(|| Some(Cx::new(it.next()?, it.next()?))).collect();
        NnWeights {
            memory: self.memory,
            hidden: self.hidden,
            w1,
            b1,
            w2,
            b2,
            denorm_shift: self.denorm_shift,
            taps,
        }
    }

    pub fn values(&self) -> impl Iterator<Item = V> + '_ {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .copied()
            .chain(self.taps.iter().flat_map(|c| [c.re, c.im]))
    }

    pub fn check(&self) -> Result<()> {
        let (l, h) = (self.memory, self.hidden);
        if self.w1.len() != 2 * l * h
            || self.b1.len() != h
            || self.w2.len() != 2 * h
            || self.b2.len() != 2
            || self.taps.len() != l
        {
            return Err(Error::shape(format!("NN weights do not match L = {l}, N_h = {h}")));
        }
        Ok(())
    }
}

/// Network input `[Re x(n) .. Re x(n-L+1), Im x(n) .. Im x(n-L+1)]`.
pub fn split<V: Copy>(window: &[Cx<V>]) -> Vec<V> {
    window.iter().map(|c| c.re).chain(window.iter().map(|c| c.im)).collect()
}

/// The two datapath parts of the NN canceller for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnSample<V> {
    /// Linear FIR branch.
    pub linear: Cx<V>,
    /// Network output after the `2^s` shift.
    pub network: Cx<V>,
}

pub fn nn_parts<D: Datapath>(
    dp: &mut D,
    weights: &NnWeights<D::V>,
    stages: &(StageConfig, StageConfig),
    linear_pe: usize,
    window: &[Cx<D::V>],
) -> NnSample<D::V> {
    let (h, o) = stages;
    let hidden = dense(dp, h, &weights.w1, &weights.b1, &split(window));
    let out = dense(dp, o, &weights.w2, &weights.b2, &hidden);
    let network = dp.cshift(Cx::new(out[0], out[1]), weights.denorm_shift);
    let linear = complex_dot(dp, linear_pe, &weights.taps, window);
    NnSample { linear, network }
}

/// Linear plus network output for one window.
pub fn nn_sample<D: Datapath>(
    dp: &mut D,
    weights: &NnWeights<D::V>,
    stages: &(StageConfig, StageConfig),
    linear_pe: usize,
    window: &[Cx<D::V>],
) -> Cx<D::V> {
    let parts = nn_parts(dp, weights, stages, linear_pe, window);
    dp.cadd(parts.linear, parts.network)
}

/// Polynomial output for one window `[x(n) .. x(n-L+1)]`.
pub fn poly_sample<D: Datapath>(dp: &mut D, weights: &PolyWeights<D::V>, n_pe: usize, window: &[Cx<D::V>]) -> Cx<D::V> {
    let basis: Vec<Cx<D::V>> = window.iter().flat_map(|&u| basis_terms(dp, u, weights.order)).collect();
    complex_dot(dp, n_pe, &weights.coeffs, &basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cancellers::basis::build_basis;
    use crate::fixed::FxFormat;
    use crate::pipeline::config::Schedule;
    use crate::pipeline::datapath::{CountPath, FxPath, RangePath};
    use num_complex::Complex64;

    #[test]
    fn tree_order() {
        let leaves: Vec<String> = "abcde".chars().map(String::from).collect();
        let r = tree_reduce(leaves, |x, y| format!("({x}{y})"));
        assert_eq!(r.as_deref(), Some("(((ab)(cd))e)"));
        assert_eq!(tree_reduce(Vec::<i32>::new(), |a, b| a + b), None);
        assert_eq!(tree_reduce(vec![7], |a, b| a + b), Some(7));
    }

    #[test]
    fn dense_matches_plain_matrix_product() {
        let fmt = FxFormat::new(16, 8).unwrap();
        let w: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..4).map(|i| i as f64 * 0.1 - 0.2).collect();
        let x: Vec<f64> = (0..6).map(|i| (i as f64 * 0.71).cos()).collect();
        for s in [Schedule::Nbn, Schedule::Ibi] {
            for n_pe in [1, 2, 3, 4, 6, 12, 24] {
                let Ok(cfg) = StageConfig::new(s, 6, 4, n_pe, fmt, Activation::Relu) else {
                    continue;
                };
                let got = dense(&mut RangePath::default(), &cfg, &w, &b, &x);
                for j in 0..4 {
                    let want = (b[j] + (0..6).map(|i| w[j * 6 + i] * x[i]).sum::<f64>()).max(0.0);
                    assert!((got[j] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn basis_terms_match_float_basis() {
        let u = Complex64::new(0.6, -0.45);
        let want = build_basis(&[u], 7).unwrap();
        let got = basis_terms(&mut RangePath::default(), Cx::new(u.re, u.im), 7);
        for (g, w) in got.iter().zip(&want) {
            assert!((Complex64::new(g.re, g.im) - w).norm() < 1e-14);
        }
    }

    #[test]
    fn complex_dot_counts() {
        let w = vec![Cx::new(1.0, 0.5); 13];
        let mut c = CountPath::default();
        complex_dot(&mut c, 2, &w, &w);
        assert_eq!((c.mults, c.adds), (39, 65 + 24));
    }

    #[test]
    fn fixed_poly_tracks_float() {
        let fmt = FxFormat::new(24, 20).unwrap();
        let weights = PolyWeights {
            memory: 2,
            order: 3,
            coeffs: (0..12)
                .map(|i| Cx::new((i as f64 * 0.3).sin() * 0.5, (i as f64).cos() * 0.2))
                .collect(),
        };
        let window = [Cx::new(0.5, -0.25), Cx::new(-0.7, 0.1)];
        let float = poly_sample(&mut RangePath::default(), &weights, 4, &window);
        let qw = weights.map(|v| fmt.quantize_raw(v));
        let qx: Vec<_> = window
            .iter()
            .map(|c| Cx::new(fmt.quantize_raw(c.re), fmt.quantize_raw(c.im)))
            .collect();
        let fixed = poly_sample(&mut FxPath::new(fmt), &qw, 4, &qx);
        assert!((fmt.to_f64(fixed.re) - float.re).abs() < 1e-4);
        assert!((fmt.to_f64(fixed.im) - float.im).abs() < 1e-4);
    }

    #[test]
    fn weights_map_round_trip() {
        let w = NnWeights {
            memory: 1,
            hidden: 1,
            w1: vec![1.0, 2.0],
            b1: vec![3.0],
            w2: vec![4.0, 5.0],
            b2: vec![6.0, 7.0],
            denorm_shift: -2,
            taps: vec![Cx::new(8.0, 9.0)],
        };
        assert!(w.check().is_ok());
        let doubled = w.map(|v| v * 2.0);
        assert_eq!(
            doubled.values().collect::<Vec<_>>(),
            w.values().map(|v| v * 2.0).collect::<Vec<_>>()
        );
        assert_eq!(doubled.taps[0], Cx::new(16.0, 18.0));
    }
}
