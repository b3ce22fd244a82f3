//! Kendall's tau-b with tie correction.
//!
//! p-values come from the exact permutation distribution of the pair score
//! `S = #concordant - #discordant` for `n <= EXACT_MAX_N`, and from the
//! tie-corrected normal approximation of `S` otherwise.

use itertools::Itertools;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub const EXACT_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KendallResult {
    pub n: usize,
    pub tau: f64,
    /// `P(|S'| >= |S|)` under independence.
    pub p_two_sided: f64,
    /// `P(S' <= S)`: evidence for a negative association.
    pub p_less: f64,
    /// `P(S' >= S)`: evidence for a positive association.
    pub p_greater: f64,
    pub method: PValueMethod,
}

fn sign(a: f64, b: f64) -> i64 {
    match a.partial_cmp(&b) {
        Some(std::cmp::Ordering::Greater) => 1,
        Some(std::cmp::Ordering::Less) => -1,
        _ => 0,
    }
}

/// `S` over all pairs of the given y-ordering.
fn pair_score(x: &[f64], y: &[f64], order: &[usize]) -> i64 {
    let n = x.len();
    let mut s = 0;
    for i in 0..n {
        for j in i + 1..n {
            s += sign(x[i], x[j]) * sign(y[order[i]], y[order[j]]);
        }
    }
    s
}

/// Sizes of runs of equal values.
fn tie_groups(v: &[f64]) -> Vec<u64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .chunk_by(|a, b| a == b)
        .map(|g| g.len() as u64)
        .filter(|&t| t > 1)
        .collect()
}

pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<KendallResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientPoints(n));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("NaN in Kendall input".into()));
    }

    let pairs = (n * (n - 1) / 2) as u64;
    let tx = tie_groups(x);
    let ty = tie_groups(y);
    let tied_x: u64 = tx.iter().map(|t| t * (t - 1) / 2).sum();
    let tied_y: u64 = ty.iter().map(|t| t * (t - 1) / 2).sum();
    if tied_x == pairs || tied_y == pairs {
        return Err(Error::ConstantInput);
    }

    let identity: Vec<usize> = (0..n).collect();
    let s = pair_score(x, y, &identity);
    let tau = s as f64 / (((pairs - tied_x) as f64) * ((pairs - tied_y) as f64)).sqrt();

    if n <= EXACT_MAX_N {
        let (mut two, mut less, mut greater, mut total) = (0u64, 0u64, 0u64, 0u64);
        for perm in (0..n).permutations(n) {
            let sp = pair_score(x, y, &perm);
            total += 1;
            two += u64::from(sp.abs() >= s.abs());
            less += u64::from(sp <= s);
            greater += u64::from(sp >= s);
        }
        let t = total as f64;
        return Ok(KendallResult {
            n,
            tau,
            p_two_sided: two as f64 / t,
            p_less: less as f64 / t,
            p_greater: greater as f64 / t,
            method: PValueMethod::Exact,
        });
    }

    let nf = n as f64;
    let sum_over = |ts: &[u64], f: &dyn Fn(f64) -> f64| ts.iter().map(|&t| f(t as f64)).sum::<f64>();
    let v0 = nf * (nf - 1.0) * (2.0 * nf + 5.0);
    let vt = sum_over(&tx, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let vu = sum_over(&ty, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let v1 = sum_over(&tx, &|t| t * (t - 1.0)) * sum_over(&ty, &|t| t * (t - 1.0));
    let v2 = sum_over(&tx, &|t| t * (t - 1.0) * (t - 2.0)) * sum_over(&ty, &|t| t * (t - 1.0) * (t - 2.0));
    let var_s = (v0 - vt - vu) / 18.0
        + v1 / (2.0 * nf * (nf - 1.0))
        + v2 / (9.0 * nf * (nf - 1.0) * (nf - 2.0));
    let z = s as f64 / var_s.sqrt();
    let upper = |z: f64| 0.5 * erfc(z / std::f64::consts::SQRT_2);
    Ok(KendallResult {
        n,
        tau,
        p_two_sided: (2.0 * upper(z.abs())).min(1.0),
        p_less: upper(-z),
        p_greater: upper(z),
        method: PValueMethod::Normal,
    })
}
