//! Hard-thresholded sample covariance for sparse population covariances.
//!
//! Entries of `S = XᵀX/n` below three robust standard deviations of the
//! bulk are zeroed. The bulk spread `σ₂` is the standard deviation of the
//! entries within `3σ₁` of zero, where `σ₁` is the standard deviation of all
//! `p²` entries. Both use the population (divide-by-count) convention.

use nalgebra::DMatrix;

use crate::error::{Result, SdlError};
use crate::linalg;

#[derive(Debug, Clone)]
pub struct CovEstimate {
    pub sigma_hat: DMatrix<f64>,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Fraction of entries of `S` inside the `3σ₁` band.
    pub kept_fraction: f64,
    /// `3σ₂`; entries with `|S_ij| < threshold` are zeroed.
    pub threshold: f64,
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> (f64, usize) {
    let (mut count, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        count += 1;
        sum += v;
    }
    if count == 0 {
        return (0.0, 0);
    }
    let mean = sum / count as f64;
    let ss: f64 = values.map(|v| (v - mean).powi(2)).sum();
    ((ss / count as f64).sqrt(), count)
}

/// Zeroes entries with `|S_ij| < threshold`.
pub fn hard_threshold(s: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    s.map(|v| if v.abs() >= threshold { v } else { 0.0 })
}

pub fn estimate_covariance(x: &DMatrix<f64>) -> Result<CovEstimate> {
    let (n, p) = x.shape();
    if n < 2 || p < 2 {
        return Err(SdlError::InvalidInput(
            "covariance estimation needs n >= 2 and p >= 2".into(),
        ));
    }
    let mut s = x.tr_mul(x) / n as f64;
    linalg::symmetrize(&mut s);
    let (sigma1, _) = population_std(s.iter().copied());
    let band = 3.0 * sigma1;
    let inner = s.iter().copied().filter(move |v| v.abs() <= band);
    let (sigma2, kept) = population_std(inner);
    if !(sigma2 > 0.0) {
        return Err(SdlError::DegenerateSpread);
    }
    let threshold = 3.0 * sigma2;
    Ok(CovEstimate {
        sigma_hat: hard_threshold(&s, threshold),
        sigma1,
        sigma2,
        kept_fraction: kept as f64 / (p * p) as f64,
        threshold,
    })
}

/// `max_{j≠i} |M_ij|` for every row.
pub fn row_offdiag_max(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .filter(|&j| j != i)
                .map(|j| m[(i, j)].abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Inflated off-diagonal bound `row_max + 20√(log p / n)` used by the
/// covariance-free test when only an estimate of Σ⁻¹ is at hand.
pub fn offdiag_bound(row_max: f64, p: usize, n: usize) -> f64 {
    row_max + 20.0 * ((p as f64).ln() / n as f64).sqrt()
}

/// Inverts a symmetric matrix, adding the smallest ridge from
/// `{0, 1e-8, 1e-7, …, 1}` that makes it positive definite.
/// Returns `(inverse, ridge)`.
pub fn invert_with_ridge(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if !m.is_square() {
        return Err(SdlError::InvalidCovariance("matrix is not square".into()));
    }
    let p = m.nrows();
    let mut ridge = 0.0;
    loop {
        let shifted = m + DMatrix::identity(p, p) * ridge;
        if let Ok(inv) = linalg::spd_inverse(&shifted) {
            return Ok((inv, ridge));
        }
        ridge = if ridge == 0.0 { 1e-8 } else { ridge * 10.0 };
        if ridge > 1.0 {
            return Err(SdlError::InvalidCovariance(
                "no ridge up to 1 makes the estimate positive definite".into(),
            ));
        }
    }
}

/// Row-per-line CSV without header.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
