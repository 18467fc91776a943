//! Real multiplications, additions and parameters per cancelled sample.
//!
//! A complex multiplication costs three real multiplications and five
//! additions, a subtraction or a ReLU comparison one addition. The closed
//! forms are cross-checked against an instrumented run of the datapath; the
//! polynomial basis generator and the final linear-plus-network combiner
//! are not counted.

use std::fmt::Write as _;

use serde::Serialize;

use crate::cancellers::basis::{basis_len, check_order};
use crate::error::{Error, Result};
use crate::fixed::{Cx, FxFormat};
use crate::pipeline::config::NnLayout;
use crate::pipeline::datapath::CountPath;
use crate::pipeline::reference::{complex_dot, nn_parts, NnWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OpCount {
    pub mults: u64,
    pub adds: u64,
    pub params: u64,
}

/// Complex FIR of `L` taps: `3L` multiplications, `7L - 2` additions.
pub fn linear_counts(memory: usize) -> Result<OpCount> {
    if memory == 0 {
        return Err(Error::config("memory length L must be at least 1"));
    }
    let l = memory as u64;
    Ok(OpCount {
        mults: 3 * l,
        adds: 7 * l - 2,
        params: 2 * l,
    })
}

/// `N_MUL = 3/4 L (P+1)(P+3)`, `N_ADD = 7/4 L (P+1)(P+3) - 2`.
pub fn poly_counts(memory: usize, order: usize) -> Result<OpCount> {
    check_order(order)?;
    if memory == 0 {
        return Err(Error::config("memory length L must be at least 1"));
    }
    let k = basis_len(memory, order) as u64;
    Ok(OpCount {
        mults: 3 * k,
        adds: 7 * k - 2,
        params: 2 * k,
    })
}

/// `N_MUL = (2L+2) N_h + 3L`, `N_ADD = (2L+3) N_h + 7L - 2`.
pub fn nn_counts(memory: usize, hidden: usize) -> Result<OpCount> {
    if memory == 0 || hidden == 0 {
        return Err(Error::config("NN canceller needs L >= 1 and N_h >= 1"));
    }
    let (l, h) = (memory as u64, hidden as u64);
    Ok(OpCount {
        mults: (2 * l + 2) * h + 3 * l,
        adds: (2 * l + 3) * h + 7 * l - 2,
        params: (2 * l + 1) * h + 2 * h + 2 + 2 * l,
    })
}

/// Counts one pass of the polynomial dot product on `n_pe` complex PEs.
pub fn measured_poly_counts(memory: usize, order: usize, n_pe: usize) -> Result<OpCount> {
    check_order(order)?;
    let k = basis_len(memory, order);
    if n_pe == 0 || n_pe > k {
        return Err(Error::config(format!("{n_pe} PEs cannot serve {k} coefficients")));
    }
    let ones = vec![Cx::new(1.0, 1.0); k];
    let mut dp = CountPath::default();
    complex_dot(&mut dp, n_pe, &ones, &ones);
    Ok(OpCount {
        mults: dp.mults,
        adds: dp.adds,
        params: 2 * k as u64,
    })
}

/// Counts one pass of the NN canceller datapath in `layout`.
pub fn measured_nn_counts(memory: usize, hidden: usize, layout: &NnLayout) -> Result<OpCount> {
    let stages = layout.stages(memory, hidden, FxFormat::new(16, 8)?)?;
    let w = NnWeights {
        memory,
        hidden,
        w1: vec![0.5; 2 * memory * hidden],
        b1: vec![0.5; hidden],
        w2: vec![0.5; 2 * hidden],
        b2: vec![0.5; 2],
        denorm_shift: 0,
        taps: vec![Cx::new(0.5, 0.5); memory],
    };
    let window = vec![Cx::new(0.5, -0.5); memory];
    let mut dp = CountPath::default();
    nn_parts(&mut dp, &w, &stages, layout.linear_pe, &window);
    Ok(OpCount {
        mults: dp.mults,
        adds: dp.adds,
        params: w.values().count() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComplexityRow {
    pub canceller: String,
    pub counts: OpCount,
}

/// Side-by-side table of both cancellers.
pub fn complexity_table(memory: usize, order: usize, hidden: usize) -> Result<Vec<ComplexityRow>> {
    Ok(vec![
        ComplexityRow {
            canceller: format!("poly (L={memory}, P={order})"),
            counts: poly_counts(memory, order)?,
        },
        ComplexityRow {
            canceller: format!("nn (L={memory}, N_h={hidden})"),
            counts: nn_counts(memory, hidden)?,
        },
    ])
}

pub fn render_table(rows: &[ComplexityRow]) -> String {
    let width = rows.iter().map(|r| r.canceller.len()).max().unwrap_or(0).max(9);
    let mut out = format!(
        "{:<width$}  {:>8}  {:>8}  {:>8}\n",
        "canceller", "mults", "adds", "params"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>8}",
            r.canceller, r.counts.mults, r.counts.adds, r.counts.params
        );
    }
    out
}
