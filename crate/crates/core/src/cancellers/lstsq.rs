//! Complex linear least squares via equilibrated normal equations.
//!
//! Columns are scaled to unit norm, the Gram matrix is factored with a
//! pivot-checked Cholesky decomposition, and the solution is polished with
//! iterative refinement against the unsquared residual. Rows are produced on
//! demand so the design matrix is never stored.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative pivot below which the (unit-diagonal) Gram matrix is considered singular.
const PIVOT_TOL: f64 = 1e-13;
const REFINEMENT_STEPS: usize = 3;

/// Minimizes `sum_n |target[n] - row(n) . h|^2 + lambda |h|^2`.
///
/// `fill_row(n, buf)` writes row `n` of the design matrix into `buf`.
pub fn solve<F>(ncols: usize, target: &[Complex64], lambda: f64, fill_row: F) -> Result<Vec<Complex64>>
where
    F: Fn(usize, &mut [Complex64]),
{
    let nrows = target.len();
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::config("regularization must be finite and non-negative"));
    }
    if ncols == 0 {
        return Err(Error::config("least squares needs at least one coefficient"));
    }
    if nrows < ncols {
        return Err(Error::shape(format!(
            "{nrows} samples cannot determine {ncols} coefficients"
        )));
    }

    let mut row = vec![Complex64::new(0.0, 0.0); ncols];

    let mut norms = vec![0.0f64; ncols];
    for n in 0..nrows {
        fill_row(n, &mut row);
        for (acc, v) in norms.iter_mut().zip(&row) {
            *acc += v.norm_sqr();
        }
    }
    let mut scale = Vec::with_capacity(ncols);
    for (j, &nsq) in norms.iter().enumerate() {
        if !nsq.is_finite() {
            return Err(Error::Numeric(format!("design column {j} is not finite")));
        }
        if nsq > 0.0 {
            scale.push(nsq.sqrt().recip());
        } else if lambda > 0.0 {
            scale.push(1.0);
        } else {
            return Err(Error::RankDeficient(format!("design column {j} is identically zero")));
        }
    }

    // Upper triangle of the scaled Gram matrix, real and imaginary planes split
    // so the inner loop vectorizes.
    let mut g_re = vec![0.0f64; ncols * ncols];
    let mut g_im = vec![0.0f64; ncols * ncols];
    let mut rhs = vec![Complex64::new(0.0, 0.0); ncols];
    let mut r_re = vec![0.0f64; ncols];
    let mut r_im = vec![0.0f64; ncols];
    for (n, &t) in target.iter().enumerate() {
        fill_row(n, &mut row);
        for j in 0..ncols {
            let v = row[j] * scale[j];
            r_re[j] = v.re;
            r_im[j] = v.im;
            rhs[j] += v.conj() * t;
        }
        for i in 0..ncols {
            let (ar, ai) = (r_re[i], r_im[i]);
            let gr = &mut g_re[i * ncols + i..(i + 1) * ncols];
            let gi = &mut g_im[i * ncols + i..(i + 1) * ncols];
            let (br, bi) = (&r_re[i..], &r_im[i..]);
            for k in 0..gr.len() {
                gr[k] += ar * br[k] + ai * bi[k];
                gi[k] += ar * bi[k] - ai * br[k];
            }
        }
    }
    let penalty: Vec<f64> = scale.iter().map(|s| lambda * s * s).collect();
    for (j, p) in penalty.iter().enumerate() {
        g_re[j * ncols + j] += p;
    }

    let chol = Cholesky::factor(ncols, &g_re, &g_im)?;
    let mut h = chol.solve(&rhs);

    for _ in 0..REFINEMENT_STEPS {
        let mut grad = vec![Complex64::new(0.0, 0.0); ncols];
        for (n, &t) in target.iter().enumerate() {
            fill_row(n, &mut row);
            let mut pred = Complex64::new(0.0, 0.0);
            for j in 0..ncols {
                pred += row[j] * scale[j] * h[j];
            }
            let r = t - pred;
            for j in 0..ncols {
                grad[j] += (row[j] * scale[j]).conj() * r;
            }
        }
        for j in 0..ncols {
            grad[j] -= h[j] * penalty[j];
        }
        let delta = chol.solve(&grad);
        for (hj, dj) in h.iter_mut().zip(&delta) {
            *hj += dj;
        }
    }

    let coeffs: Vec<Complex64> = h.iter().zip(&scale).map(|(hj, s)| hj * s).collect();
    if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Numeric("least-squares solution is not finite".into()));
    }
    Ok(coeffs)
}

/// `G = R^H R` with `R` upper triangular, stored row-major.
struct Cholesky {
    n: usize,
    r: Vec<Complex64>,
}

impl Cholesky {
    fn factor(n: usize, g_re: &[f64], g_im: &[f64]) -> Result<Self> {
        let mut r = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in i..n {
                r[i * n + j] = Complex64::new(g_re[i * n + j], g_im[i * n + j]);
            }
        }
        for k in 0..n {
            let mut d = r[k * n + k].re;
            for i in 0..k {
                d -= r[i * n + k].norm_sqr();
            }
            let reference = g_re[k * n + k].max(f64::MIN_POSITIVE);
            if d.is_nan() || d <= PIVOT_TOL * reference {
                return Err(Error::RankDeficient(format!(
                    "pivot {k} is {d:.3e} relative to diagonal {reference:.3e}"
                )));
            }
            let d = d.sqrt();
            r[k * n + k] = Complex64::new(d, 0.0);
            for j in k + 1..n {
                let mut v = r[k * n + j];
                for i in 0..k {
                    v -= r[i * n + k].conj() * r[i * n + j];
                }
                r[k * n + j] = v / d;
            }
        }
        Ok(Self { n, r })
    }

    #[allow(clippy::needless_range_loop)]
    fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        // R^H z = b
        let mut z = b.to_vec();
        for i in 0..n {
            let mut v = z[i];
            for k in 0..i {
                v -= self.r[k * n + i].conj() * z[k];
            }
            z[i] = v / self.r[i * n + i].re;
        }
        // R h = z
        for i in (0..n).rev() {
            let mut v = z[i];
            for k in i + 1..n {
                v -= self.r[i * n + k] * z[k];
            }
            z[i] = v / self.r[i * n + i].re;
        }
        z
    }
}
