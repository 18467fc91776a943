use num_complex::Complex64;

use crate::error::{Error, Result};

/// Basis functions per delay for odd order `p <= order`: `sum (p+1)` = `(P+1)(P+3)/4`.
pub fn terms_per_delay(order: usize) -> usize {
    (order + 1) * (order + 3) / 4
}

/// Total coefficient count `L (P+1)(P+3) / 4`.
pub fn basis_len(memory: usize, order: usize) -> usize {
    memory * terms_per_delay(order)
}

pub fn check_order(order: usize) -> Result<()> {
    if order % 2 == 0 {
        return Err(Error::config(format!("non-linearity order must be odd, got {order}")));
    }
    Ok(())
}

/// `(p, q)` pairs of one delay in canonical order: `p` ascending over odd
/// orders, `q` ascending from 0 to `p`.
pub fn order_pairs(order: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..=order).step_by(2).flat_map(|p| (0..=p).map(move |q| (p, q)))
}

/// `[x(n), x(n-1), ..., x(n-L+1)]` with zero history before the first sample.
pub fn window(x: &[Complex64], n: usize, memory: usize) -> Vec<Complex64> {
    let mut w = vec![Complex64::new(0.0, 0.0); memory];
    fill_window(x, n, &mut w);
    w
}

pub(crate) fn fill_window(x: &[Complex64], n: usize, out: &mut [Complex64]) {
    for (l, slot) in out.iter_mut().enumerate() {
        *slot = if l <= n { x[n - l] } else { Complex64::new(0.0, 0.0) };
    }
}

/// Evaluates `x(n-l)^q conj(x(n-l))^(p-q)` for every delay `l` (outer), odd
/// order `p` (middle) and `q` (inner).
pub fn build_basis(window: &[Complex64], order: usize) -> Result<Vec<Complex64>> {
    check_order(order)?;
    let mut out = vec![Complex64::new(0.0, 0.0); basis_len(window.len(), order)];
    fill_basis(window, order, &mut out);
    Ok(out)
}

pub(crate) fn fill_basis(window: &[Complex64], order: usize, out: &mut [Complex64]) {
    let per = terms_per_delay(order);
    let mut pow = vec![Complex64::new(1.0, 0.0); order + 1];
    let mut cpow = vec![Complex64::new(1.0, 0.0); order + 1];
    for (l, &u) in window.iter().enumerate() {
        for k in 1..=order {
            pow[k] = pow[k - 1] * u;
            cpow[k] = cpow[k - 1] * u.conj();
        }
        for (slot, (p, q)) in out[l * per..(l + 1) * per].iter_mut().zip(order_pairs(order)) {
            *slot = pow[q] * cpow[p - q];
        }
    }
}
