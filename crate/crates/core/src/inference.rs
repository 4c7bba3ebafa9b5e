//! Two-sided p-values and decisions from debiased estimates, empirical
//! type-I error / power, and the covariance-free variant that only needs a
//! bound on the off-diagonal covariance.

use nalgebra::DVector;
use serde::Serialize;

use crate::debias::DebiasedEstimate;
use crate::error::{Result, SdlError};
use crate::solver::LassoFit;

pub use crate::dist::{normal_cdf, normal_quantile};

/// P-values below this are reported as exactly zero.
pub const P_VALUE_FLOOR: f64 = 1e-300;

/// `2(1 − Φ(|z|))`, evaluated through `erfc` and floored at
/// [`P_VALUE_FLOOR`].
pub fn two_sided_p_value(z: f64) -> f64 {
    let p = libm::erfc(z.abs() / std::f64::consts::SQRT_2);
    if p < P_VALUE_FLOOR {
        0.0
    } else {
        p.min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub alpha: f64,
    pub p_values: Vec<f64>,
    pub decisions: Vec<bool>,
    pub z_scores: Vec<f64>,
}

impl TestReport {
    fn from_parts(alpha: f64, z_scores: Vec<f64>, p_values: Vec<f64>) -> Result<Self> {
        check_alpha(alpha)?;
        let decisions = p_values.iter().map(|p| *p <= alpha).collect();
        Ok(Self {
            alpha,
            p_values,
            decisions,
            z_scores,
        })
    }

    /// Same p-values, decisions re-taken at another level.
    pub fn at_level(&self, alpha: f64) -> Result<Self> {
        Self::from_parts(alpha, self.z_scores.clone(), self.p_values.clone())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SdlError::InvalidInput(format!(
            "significance level must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// `z_i = θᵘ_i / (τ √diag_i)`, `P_i = 2(1 − Φ(|z_i|))`, reject iff `P_i ≤ α`.
///
/// `precision_diag` holds `(Σ⁻¹)ᵢᵢ`; `None` means all ones.
pub fn p_values(
    est: &DebiasedEstimate,
    precision_diag: Option<&[f64]>,
    alpha: f64,
) -> Result<TestReport> {
    if !(est.tau > 0.0) {
        return Err(SdlError::InvalidInput("noise scale tau must be > 0".into()));
    }
    let p = est.theta_u.len();
    if let Some(diag) = precision_diag {
        if diag.len() != p {
            return Err(SdlError::InvalidPrecision(format!(
                "precision diagonal has length {}, expected {p}",
                diag.len()
            )));
        }
        if let Some(bad) = diag.iter().position(|v| !(*v > 0.0)) {
            return Err(SdlError::InvalidPrecision(format!(
                "precision diagonal entry {bad} is not positive"
            )));
        }
    }
    let z_scores: Vec<f64> = (0..p)
        .map(|i| {
            let scale = precision_diag.map_or(1.0, |d| d[i].sqrt());
            est.theta_u[i] / (est.tau * scale)
        })
        .collect();
    let p_values = z_scores.iter().map(|z| two_sided_p_value(*z)).collect();
    TestReport::from_parts(alpha, z_scores, p_values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSummary {
    /// Rejection rate over true nulls; absent when there are none.
    pub type_i: Option<f64>,
    /// Rejection rate over true non-nulls; absent when there are none.
    pub power: Option<f64>,
    pub n_active: usize,
    pub n_inactive: usize,
}

/// Score decisions against an active-set mask.
pub fn evaluate_mask(decisions: &[bool], active: &[bool]) -> Result<ErrorSummary> {
    if decisions.len() != active.len() {
        return Err(SdlError::InvalidInput(format!(
            "{} decisions for {} coordinates",
            decisions.len(),
            active.len()
        )));
    }
    let (mut n_active, mut n_inactive, mut hits, mut false_hits) = (0usize, 0usize, 0usize, 0usize);
    for (&rejected, &is_active) in decisions.iter().zip(active) {
        if is_active {
            n_active += 1;
            hits += rejected as usize;
        } else {
            n_inactive += 1;
            false_hits += rejected as usize;
        }
    }
    let rate = |k: usize, m: usize| (m > 0).then(|| k as f64 / m as f64);
    Ok(ErrorSummary {
        type_i: rate(false_hits, n_inactive),
        power: rate(hits, n_active),
        n_active,
        n_inactive,
    })
}

/// Score a report against the true coefficient vector (active = nonzero).
pub fn evaluate(report: &TestReport, theta0: &DVector<f64>) -> Result<ErrorSummary> {
    let active: Vec<bool> = theta0.iter().map(|v| *v != 0.0).collect();
    evaluate_mask(&report.decisions, &active)
}

/// Inputs of the covariance-free test.
///
/// `s0_bound` and `phi0` (the compatibility constant) cannot be estimated
/// from data. The defaults, `s0_bound = ‖θ̂‖₀` and `φ₀ = 1`, are placeholders:
/// the resulting Δ is only as trustworthy as these two numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct CovFreeParams {
    pub s0_bound: usize,
    pub phi0: f64,
    pub t: f64,
    /// Per-row bound on `max_{j≠i} |Σ_ij|`.
    pub max_offdiag: Vec<f64>,
}

impl CovFreeParams {
    pub fn with_defaults(fit: &LassoFit, max_offdiag: Vec<f64>) -> Self {
        Self {
            s0_bound: fit.support_size.max(1),
            phi0: 1.0,
            t: 2.0,
            max_offdiag,
        }
    }

    /// Regularization level `4σ√((t² + 2 log p)/n)` under which the ℓ1 error
    /// bound holds with probability at least `1 − 2e^{−t²/2}`.
    pub fn recommended_lambda(&self, sigma: f64, p: usize, n: usize) -> f64 {
        4.0 * sigma * ((self.t * self.t + 2.0 * (p as f64).ln()) / n as f64).sqrt()
    }
}

/// Covariance-free test: `ξ_i = (θ̂_i + [(d/n)Xᵀ(y − Xθ̂)]_i)/τ`,
/// `Δ_i = 4λ s₀ max_offdiag_i / (τ φ₀²)`, `P_i = 2(1 − Φ((|ξ_i| − Δ_i)₊))`.
///
/// Assumes unit-variance columns. The reported z-scores are the `ξ_i`.
pub fn covfree_test(
    fit: &LassoFit,
    est: &DebiasedEstimate,
    params: &CovFreeParams,
    alpha: f64,
) -> Result<TestReport> {
    if !(params.phi0 > 0.0) {
        return Err(SdlError::InvalidInput(
            "compatibility constant phi0 must be > 0".into(),
        ));
    }
    if params.s0_bound < 1 {
        return Err(SdlError::InvalidInput("s0_bound must be >= 1".into()));
    }
    if !(params.t > 0.0) {
        return Err(SdlError::InvalidInput(
            "tail parameter t must be > 0".into(),
        ));
    }
    if !(est.tau > 0.0) {
        return Err(SdlError::InvalidInput("noise scale tau must be > 0".into()));
    }
    let p = fit.theta_hat.len();
    if params.max_offdiag.len() != p || est.correction.len() != p {
        return Err(SdlError::InvalidInput(
            "covariance-free inputs have mismatched lengths".into(),
        ));
    }
    let factor = 4.0 * fit.lambda * params.s0_bound as f64 / (est.tau * params.phi0 * params.phi0);
    let mut z_scores = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for i in 0..p {
        let xi = (fit.theta_hat[i] + est.correction[i]) / est.tau;
        let delta = factor * params.max_offdiag[i];
        let excess = (xi.abs() - delta).max(0.0);
        z_scores.push(xi);
        p_values.push(two_sided_p_value(excess));
    }
    TestReport::from_parts(alpha, z_scores, p_values)
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and
/// N(0, 1).
pub fn ks_distance_normal(samples: &[f64]) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(k, x)| {
            let f = normal_cdf(*x);
            let above = (k + 1) as f64 / m - f;
            let below = f - k as f64 / m;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::debias::PrecisionKind;
    use proptest::prelude::*;

    fn estimate(theta_u: Vec<f64>, tau: f64) -> DebiasedEstimate {
        DebiasedEstimate {
            theta_u: DVector::from_vec(theta_u.clone()),
            d: 1.0,
            tau,
            r: DVector::zeros(2),
            used_precision: PrecisionKind::Identity,
            correction: DVector::from_vec(theta_u),
        }
    }

    fn zero_fit(p: usize, lambda: f64) -> LassoFit {
        LassoFit {
            lambda,
            theta_hat: DVector::zeros(p),
            support_size: 0,
            iterations: 0,
            kkt_gap: 0.0,
        }
    }

    #[test]
    fn p_value_examples() {
        let rep = p_values(
            &estimate(vec![0.0, 1.959_963_984_540_054, 40.0, -40.0, 1.96], 1.0),
            None,
            0.05,
        )
        .unwrap();
        assert_eq!(rep.p_values[0], 1.0);
        assert!((rep.p_values[1] - 0.05).abs() < 1e-12);
        assert_eq!(rep.p_values[2], 0.0);
        assert_eq!(rep.decisions[2..], [true, true, true]);
        assert!(!rep.decisions[0]);
        let mut prev = 1.0;
        for k in 0..60 {
            let p = two_sided_p_value(k as f64 * 0.5);
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn precision_diagonal_scales_z() {
        let rep = p_values(&estimate(vec![2.0, 2.0], 0.5), Some(&[1.0, 4.0]), 0.05).unwrap();
        assert_eq!(rep.z_scores, vec![4.0, 2.0]);
        assert!(matches!(
            p_values(&estimate(vec![1.0, 1.0], 1.0), Some(&[1.0, 0.0]), 0.05),
            Err(SdlError::InvalidPrecision(_))
        ));
    }

    #[test]
    fn evaluate_examples() {
        let theta0 = DVector::from_vec(vec![0.0, 1.0, 0.0, 1.0]);
        let mut rep = p_values(&estimate(vec![0.0; 4], 1.0), None, 0.05).unwrap();
        let s = evaluate(&rep, &theta0).unwrap();
        assert_eq!((s.type_i, s.power), (Some(0.0), Some(0.0)));
        rep.decisions = vec![false, true, false, true];
        let s = evaluate(&rep, &theta0).unwrap();
        assert_eq!((s.type_i, s.power), (Some(0.0), Some(1.0)));
        let s = evaluate(&rep, &DVector::zeros(4)).unwrap();
        assert_eq!(s.power, None);
        assert_eq!(s.type_i, Some(0.5));
    }

    #[test]
    fn covfree_reduces_to_z_test_without_offdiag() {
        let est = estimate(vec![0.3, -2.5, 1.0], 0.5);
        let fit = zero_fit(3, 0.2);
        let params = CovFreeParams::with_defaults(&fit, vec![0.0; 3]);
        let cf = covfree_test(&fit, &est, &params, 0.05).unwrap();
        let plain = p_values(&est, None, 0.05).unwrap();
        for i in 0..3 {
            assert!((cf.p_values[i] - plain.p_values[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn covfree_large_delta_gives_unit_p_value() {
        let est = estimate(vec![0.3, -2.5], 0.5);
        let fit = zero_fit(2, 0.2);
        let params = CovFreeParams::with_defaults(&fit, vec![10.0, 10.0]);
        let cf = covfree_test(&fit, &est, &params, 0.05).unwrap();
        assert_eq!(cf.p_values, vec![1.0, 1.0]);
        let bad = CovFreeParams {
            phi0: 0.0,
            ..params
        };
        assert!(covfree_test(&fit, &est, &bad, 0.05).is_err());
    }

    #[test]
    fn recommended_lambda_arithmetic() {
        let fit = zero_fit(1, 0.0);
        let params = CovFreeParams::with_defaults(&fit, vec![0.0]);
        let lambda = params.recommended_lambda(1.0, 1000, 600);
        let expected = 4.0 * ((4.0 + 2.0 * 1000f64.ln()) / 600.0).sqrt();
        assert!((lambda - expected).abs() < 1e-15);
        assert!((lambda - 0.689_260_677_498_516_5).abs() < 1e-12);
    }

    #[test]
    fn ks_distance_of_exact_quantiles_is_small() {
        let m = 1000;
        let pts: Vec<f64> = (0..m)
            .map(|k| normal_quantile((k as f64 + 0.5) / m as f64).unwrap())
            .collect();
        assert!((ks_distance_normal(&pts) - 0.5 / m as f64).abs() < 1e-12);
        assert!(ks_distance_normal(&[10.0, 11.0]) > 0.99);
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(p_values(&estimate(vec![1.0], 1.0), None, 0.0).is_err());
        assert!(p_values(&estimate(vec![1.0], 1.0), None, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn p_values_monotone_in_abs_z(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let rep = p_values(&estimate(vec![a, b], 1.0), None, 0.05).unwrap();
            if a.abs() >= b.abs() {
                prop_assert!(rep.p_values[0] <= rep.p_values[1]);
            }
        }

        #[test]
        fn decisions_invariant_under_rescaling(vals in proptest::collection::vec(-5.0f64..5.0, 1..20), c in 0.01f64..100.0) {
            let a = p_values(&estimate(vals.clone(), 0.7), None, 0.05).unwrap();
            let scaled: Vec<f64> = vals.iter().map(|v| v * c).collect();
            let b = p_values(&estimate(scaled, 0.7 * c), None, 0.05).unwrap();
            prop_assert_eq!(a.decisions, b.decisions);
        }

        #[test]
        fn covfree_dominates_plain(vals in proptest::collection::vec(-5.0f64..5.0, 1..20), bound in 0.0f64..0.5) {
            let p = vals.len();
            let est = estimate(vals, 0.8);
            let fit = zero_fit(p, 0.05);
            let params = CovFreeParams::with_defaults(&fit, vec![bound; p]);
            let cf = covfree_test(&fit, &est, &params, 0.05).unwrap();
            let plain = p_values(&est, None, 0.05).unwrap();
            for i in 0..p {
                prop_assert!(cf.p_values[i] >= plain.p_values[i]);
            }
        }

        #[test]
        fn decisions_follow_p_values(vals in proptest::collection::vec(-5.0f64..5.0, 1..20), alpha in 0.001f64..0.5) {
            let rep = p_values(&estimate(vals, 1.0), None, alpha).unwrap();
            for i in 0..rep.p_values.len() {
                prop_assert_eq!(rep.decisions[i], rep.p_values[i] <= alpha);
                let z = rep.z_scores[i];
                prop_assert!((rep.p_values[i] - 2.0 * (1.0 - normal_cdf(z.abs()))).abs() < 1e-12);
            }
        }
    }
}
