//! Analytic power theory.
//!
//! * `G(α, u)`: power of a two-sided level-α z-test with standardized effect
//!   `u`.
//! * Minimax risk `M(ε)` of soft thresholding over ε-sparse signals, its
//!   optimal threshold `ξ*(ε)`, and the worst-case noise scale
//!   `τ*² = 1/(1 − M(ε)/δ)`.
//! * The scalar state-evolution recursion predicting the debiased noise
//!   scale of the Lasso under standard Gaussian design.
//! * Minimax upper bounds on the power of any test: the general-covariance
//!   bound with a chi-squared correction, its standard-design corollary,
//!   and the per-design oracle bound.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dist::{normal_cdf, normal_pdf, normal_quantile, normal_sf};
use crate::error::{Result, SdlError};
use crate::linalg;

pub use crate::dist::chi2_survival;

/// `G(α, u) = 2 − Φ(Φ⁻¹(1 − α/2) + u) − Φ(Φ⁻¹(1 − α/2) − u)`, with the
/// endpoints α ∈ {0, 1} taken as limits.
pub fn power_g(alpha: f64, u: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&alpha));
    if alpha <= 0.0 {
        return 0.0;
    }
    if alpha >= 1.0 {
        return 1.0;
    }
    let q = normal_quantile(1.0 - alpha / 2.0).expect("alpha strictly inside (0, 1)");
    (normal_sf(q + u) + normal_sf(q - u)).clamp(0.0, 1.0)
}

/// `φ(ξ) − ξΦ(−ξ)`, the Gaussian tail moment that appears in the minimax
/// parametrization.
fn tail_moment(xi: f64) -> f64 {
    normal_pdf(xi) - xi * normal_cdf(-xi)
}

/// Sparsity level ε at which `xi` is the minimax soft threshold.
pub fn sparsity_of_threshold(xi: f64) -> f64 {
    let a = 2.0 * tail_moment(xi);
    a / (xi + a)
}

/// Minimax risk attained at threshold `xi`.
pub fn risk_of_threshold(xi: f64) -> f64 {
    2.0 * normal_pdf(xi) / (xi + 2.0 * tail_moment(xi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinimaxRisk {
    pub xi_star: f64,
    pub m: f64,
}

/// Solves `ε(ξ) = epsilon` for the minimax threshold by bisection; `ε(ξ)`
/// decreases strictly from 1 to 0 on `(0, ∞)`.
pub fn minimax_risk(epsilon: f64) -> Result<MinimaxRisk> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SdlError::Domain(format!(
            "sparsity epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while sparsity_of_threshold(hi) > epsilon {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(SdlError::Domain(format!("epsilon {epsilon} too small")));
        }
    }
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if sparsity_of_threshold(mid) > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let xi_star = 0.5 * (lo + hi);
    Ok(MinimaxRisk {
        xi_star,
        m: risk_of_threshold(xi_star),
    })
}

/// κ(ε): the soft threshold, in noise units, that attains `M(ε)`.
pub fn minimax_threshold_kappa(epsilon: f64) -> Result<f64> {
    minimax_risk(epsilon).map(|r| r.xi_star)
}

/// Ballpark sparsity `0.25·δ/log(2/δ)` used when the true sparsity is
/// unknown: half of the noiseless ℓ1 recovery threshold at aspect ratio δ.
pub fn epsilon_bar(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 2.0) {
        return Err(SdlError::Domain(format!(
            "epsilon_bar needs delta in (0, 2), got {delta}"
        )));
    }
    Ok(0.25 * delta / (2.0 / delta).ln())
}

/// `κ(ε̄(δ))`, the default calibration threshold. Defined only while
/// `ε̄(δ) < 1`, i.e. for `δ` below about 1.40.
pub fn default_kappa(delta: f64) -> Result<f64> {
    let eps = epsilon_bar(delta)?;
    if eps >= 1.0 {
        return Err(SdlError::Domain(format!(
            "epsilon_bar({delta}) = {eps} is not a sparsity level; use a smaller n/p or fix lambda"
        )));
    }
    minimax_threshold_kappa(eps)
}

/// `τ*` (in units of σ₀); `+∞` when `δ ≤ M(ε)`.
pub fn tau_star(epsilon: f64, delta: f64) -> Result<f64> {
    Ok(TheoryPoint::new(epsilon, delta)?.tau_star)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryPoint {
    pub epsilon: f64,
    pub delta: f64,
    pub xi_star: f64,
    pub m: f64,
    /// `+∞` when `δ ≤ M(ε)`.
    pub tau_star: f64,
}

impl TheoryPoint {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(SdlError::Domain(format!("delta must be > 0, got {delta}")));
        }
        let MinimaxRisk { xi_star, m } = minimax_risk(epsilon)?;
        let tau_star = if delta > m {
            (1.0 / (1.0 - m / delta)).sqrt()
        } else {
            f64::INFINITY
        };
        Ok(Self {
            epsilon,
            delta,
            xi_star,
            m,
            tau_star,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.tau_star.is_finite()
    }

    /// Asymptotic power lower bound `G(α, μ₀/τ*)`; equals α when τ* = ∞.
    pub fn power(&self, alpha: f64, mu0: f64) -> f64 {
        if self.is_finite() {
            power_g(alpha, mu0 / self.tau_star)
        } else {
            power_g(alpha, 0.0)
        }
    }
}

/// Normalized soft-thresholding risk `E[(η(a + Z; κ) − a)²]`, `Z ~ N(0,1)`.
pub fn soft_threshold_risk(a: f64, kappa: f64) -> f64 {
    let inside = normal_cdf(kappa - a) - normal_cdf(-kappa - a);
    let k2 = 1.0 + kappa * kappa;
    a * a * inside + k2 * normal_sf(kappa - a) - (kappa + a) * normal_pdf(kappa - a)
        + k2 * normal_sf(kappa + a)
        - (kappa - a) * normal_pdf(kappa + a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPointResult {
    pub tau: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Two-point prior state evolution with threshold `κτ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEvolution {
    pub epsilon: f64,
    /// Active magnitude `μ₀σ₀`.
    pub magnitude: f64,
    pub sigma0: f64,
    pub delta: f64,
    pub kappa: f64,
}

impl StateEvolution {
    pub fn new(epsilon: f64, mu0: f64, sigma0: f64, delta: f64, kappa: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(SdlError::Domain("epsilon must lie in [0, 1]".into()));
        }
        if !(mu0 >= 0.0 && sigma0 > 0.0 && delta > 0.0 && kappa > 0.0) {
            return Err(SdlError::Domain(
                "state evolution needs mu0 >= 0 and positive sigma0, delta, kappa".into(),
            ));
        }
        Ok(Self {
            epsilon,
            magnitude: mu0 * sigma0,
            sigma0,
            delta,
            kappa,
        })
    }

    /// One step `τ ↦ √(σ₀² + E[(η(Θ + τZ; κτ) − Θ)²]/δ)`.
    pub fn map(&self, tau: f64) -> f64 {
        let mse = if tau > 0.0 {
            let null = soft_threshold_risk(0.0, self.kappa);
            let active = soft_threshold_risk(self.magnitude / tau, self.kappa);
            tau * tau * ((1.0 - self.epsilon) * null + self.epsilon * active)
        } else {
            self.epsilon * self.magnitude * self.magnitude
        };
        (self.sigma0 * self.sigma0 + mse / self.delta).sqrt()
    }

    pub fn solve(&self) -> Result<FixedPointResult> {
        let limit = 1e6 * self.sigma0;
        let mut tau = self.map(0.0);
        for iterations in 1..=10_000 {
            let next = self.map(tau);
            if !next.is_finite() || next > limit {
                return Err(SdlError::NoFixedPoint(format!(
                    "iterate exceeded {limit:e} after {iterations} steps"
                )));
            }
            let step = (next - tau).abs();
            tau = next;
            if step <= 1e-10 {
                let residual = (self.map(tau) - tau).abs();
                if residual <= 1e-9 {
                    return Ok(FixedPointResult {
                        tau,
                        iterations,
                        residual,
                    });
                }
            }
        }
        Err(SdlError::NoFixedPoint(format!(
            "no convergence in 10000 iterations (tau = {tau:e})"
        )))
    }
}

pub fn state_evolution_tau(
    epsilon: f64,
    mu0: f64,
    sigma0: f64,
    delta: f64,
    kappa: f64,
) -> Result<FixedPointResult> {
    StateEvolution::new(epsilon, mu0, sigma0, delta, kappa)?.solve()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SdlError::Domain(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// Conditional variance `Σ_{i|S} = Σᵢᵢ − Σ_{i,S} Σ_{S,S}⁻¹ Σ_{S,i}`.
pub fn conditional_variance(sigma: &DMatrix<f64>, i: usize, s: &[usize]) -> Result<f64> {
    let p = sigma.nrows();
    if i >= p || s.iter().any(|&j| j >= p) {
        return Err(SdlError::InvalidInput("index out of range".into()));
    }
    if s.is_empty() {
        return Ok(sigma[(i, i)]);
    }
    let k = s.len();
    let sub = DMatrix::from_fn(k, k, |a, b| sigma[(s[a], s[b])]);
    let cross = DVector::from_fn(k, |a, _| sigma[(s[a], i)]);
    let chol = sub
        .cholesky()
        .ok_or_else(|| SdlError::Linalg("Sigma_{S,S} is singular or indefinite".into()))?;
    let solved = chol.solve(&cross);
    Ok(sigma[(i, i)] - cross.dot(&solved))
}

/// Upper bound on the minimax power of any level-α test of coordinate `i`
/// under a Gaussian design with covariance `sigma_cov`:
/// `G(α, μ/σ_eff(ℓ)) + F_{n−s₀+1}(n − s₀ + ℓ)` with
/// `σ_eff(ℓ) = σ/√(Σ_{i|S}(n − s₀ + ℓ))`, clamped to `[0, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn minimax_upper_bound(
    alpha: f64,
    mu: f64,
    sigma: f64,
    sigma_cov: &DMatrix<f64>,
    i: usize,
    s: &[usize],
    s0: usize,
    n: usize,
    ell: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    if s.len() >= s0 {
        return Err(SdlError::InvalidInput(format!(
            "conditioning set has {} elements, needs fewer than s0 = {s0}",
            s.len()
        )));
    }
    if s.contains(&i) {
        return Err(SdlError::InvalidInput("i must not belong to S".into()));
    }
    if s0 > n {
        return Err(SdlError::InvalidInput("s0 must not exceed n".into()));
    }
    if !(sigma > 0.0) || mu < 0.0 {
        return Err(SdlError::InvalidInput("need sigma > 0 and mu >= 0".into()));
    }
    let cond = conditional_variance(sigma_cov, i, s)?;
    let dof = (n - s0) as f64 + ell;
    if dof < 0.0 {
        return Err(SdlError::InvalidInput("n - s0 + ell must be >= 0".into()));
    }
    let u = mu * (cond * dof).max(0.0).sqrt() / sigma;
    let tail = chi2_survival((n - s0 + 1) as u64, dof)?;
    Ok((power_g(alpha, u) + tail).clamp(0.0, 1.0))
}

/// [`minimax_upper_bound`] minimized over `ℓ ∈ {0, √(n−s₀), …, 10√(n−s₀)}`.
/// Returns `(bound, ℓ)`.
#[allow(clippy::too_many_arguments)]
pub fn minimax_upper_bound_best(
    alpha: f64,
    mu: f64,
    sigma: f64,
    sigma_cov: &DMatrix<f64>,
    i: usize,
    s: &[usize],
    s0: usize,
    n: usize,
) -> Result<(f64, f64)> {
    let step = ((n.saturating_sub(s0)) as f64).sqrt();
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=10 {
        let ell = step * k as f64;
        let b = minimax_upper_bound(alpha, mu, sigma, sigma_cov, i, s, s0, n, ell)?;
        if b < best.0 {
            best = (b, ell);
        }
        if step == 0.0 {
            break;
        }
    }
    Ok(best)
}

/// Standard-design bound `G(α, μ(√(n−s₀+1) + ξ)/σ) + e^{−ξ²/8}` for
/// `0 ≤ ξ ≤ (3/2)√(n−s₀+1)`, clamped to `[0, 1]`.
pub fn corollary1_bound(
    alpha: f64,
    mu: f64,
    sigma: f64,
    n: usize,
    s0: usize,
    xi: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    if s0 > n {
        return Err(SdlError::InvalidInput("s0 must not exceed n".into()));
    }
    if !(sigma > 0.0) || mu < 0.0 {
        return Err(SdlError::InvalidInput("need sigma > 0 and mu >= 0".into()));
    }
    let root = ((n - s0 + 1) as f64).sqrt();
    if !(0.0..=1.5 * root).contains(&xi) {
        return Err(SdlError::Domain(format!(
            "xi must lie in [0, {}], got {xi}",
            1.5 * root
        )));
    }
    let u = mu * (root + xi) / sigma;
    Ok((power_g(alpha, u) + (-xi * xi / 8.0).exp()).clamp(0.0, 1.0))
}

/// [`corollary1_bound`] minimized over `points` equispaced ξ in its domain.
/// Returns `(bound, ξ)`.
pub fn corollary1_bound_best(
    alpha: f64,
    mu: f64,
    sigma: f64,
    n: usize,
    s0: usize,
    points: usize,
) -> Result<(f64, f64)> {
    if s0 > n {
        return Err(SdlError::InvalidInput("s0 must not exceed n".into()));
    }
    let upper = 1.5 * ((n - s0 + 1) as f64).sqrt();
    let points = points.max(2);
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..points {
        let xi = upper * k as f64 / (points - 1) as f64;
        let b = corollary1_bound(alpha, mu, sigma, n, s0, xi)?;
        if b < best.0 {
            best = (b, xi);
        }
    }
    Ok(best)
}

/// Oracle power `G(α, μ‖P⊥_S x̃ᵢ‖₂/σ)` of the test that knows the rest of the
/// support `S`.
pub fn oracle_power(
    x: &DMatrix<f64>,
    i: usize,
    s: &[usize],
    mu: f64,
    sigma: f64,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let p = x.ncols();
    if i >= p || s.iter().any(|&j| j >= p) {
        return Err(SdlError::InvalidInput("index out of range".into()));
    }
    if s.contains(&i) {
        return Err(SdlError::InvalidInput("i must not belong to S".into()));
    }
    if !(sigma > 0.0) {
        return Err(SdlError::InvalidInput("sigma must be > 0".into()));
    }
    let basis = x.select_columns(s);
    let resid = linalg::project_out(&basis, &x.column(i).into_owned())?;
    Ok(power_g(alpha, mu * resid.norm() / sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::normal_pdf;
    use proptest::prelude::*;

    /// Composite Simpson quadrature of `f` against the standard normal
    /// density on [-12, 12].
    fn gauss_expect(f: impl Fn(f64) -> f64) -> f64 {
        let m = 24_000;
        let (a, b) = (-12.0, 12.0);
        let h = (b - a) / m as f64;
        let mut acc = 0.0;
        for k in 0..=m {
            let z = a + h * k as f64;
            let w = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * f(z) * normal_pdf(z);
        }
        acc * h / 3.0
    }

    #[test]
    fn g_boundary_values() {
        assert!((power_g(0.05, 0.0) - 0.05).abs() <= 1e-12);
        for u in [0.0, 0.3, 2.0, 10.0] {
            assert_eq!(power_g(1.0, u), 1.0);
        }
        assert!(power_g(0.05, 50.0) >= 1.0 - 1e-12);
        assert_eq!(power_g(0.0, 1.0), 0.0);
    }

    #[test]
    fn g_reference_point() {
        // Direct two-term evaluation with q = 1.959963984540054.
        let q = 1.959_963_984_540_054_f64;
        let u = 2.1828;
        let direct = 2.0 - normal_cdf(q + u) - normal_cdf(q - u);
        assert!((power_g(0.05, u) - direct).abs() < 1e-12);
        assert!((power_g(0.05, u) - 0.5882).abs() < 1e-4);
    }

    #[test]
    fn g_monotone_and_concave_on_grid() {
        for &alpha in &[0.01, 0.05, 0.2, 0.5] {
            let mut prev = power_g(alpha, 0.0);
            for k in 1..200 {
                let g = power_g(alpha, k as f64 * 0.05);
                assert!(g >= prev - 1e-15);
                prev = g;
            }
        }
        let h = 1e-3;
        for &u in &[0.5, 1.0, 2.0, 3.0] {
            let mut prev = power_g(h, u);
            for k in 2..999 {
                let a = k as f64 * h;
                let g = power_g(a, u);
                assert!(g >= prev - 1e-15);
                let second = power_g(a + h, u) - 2.0 * g + power_g(a - h, u);
                assert!(second <= 1e-9, "alpha = {a}, u = {u}");
                prev = g;
            }
        }
    }

    #[test]
    fn minimax_threshold_at_reference_sparsity() {
        let r = minimax_risk(0.025).unwrap();
        // Root of the parametric map computed independently with Brent's
        // method on the same closed form.
        assert!((r.xi_star - 1.641_758_885_281_833).abs() < 1e-9);
        assert!((r.m - 0.123_123_983_238_678_9).abs() < 1e-9);
        assert!((sparsity_of_threshold(r.xi_star) - 0.025).abs() <= 1e-10);
        assert!((minimax_threshold_kappa(0.025).unwrap() - r.xi_star).abs() == 0.0);
    }

    #[test]
    fn sparsity_map_is_decreasing() {
        let mut prev = sparsity_of_threshold(1e-6);
        for k in 1..400 {
            let e = sparsity_of_threshold(k as f64 * 0.02);
            assert!(e < prev);
            prev = e;
        }
    }

    #[test]
    fn kappa_decreases_in_epsilon() {
        let mut prev = f64::INFINITY;
        for k in 1..50 {
            let kappa = minimax_threshold_kappa(k as f64 * 0.019).unwrap();
            assert!(kappa < prev);
            prev = kappa;
        }
    }

    #[test]
    fn small_sparsity_risk_ratio_approaches_one_slowly() {
        // M(ε)/(2ε log(1/ε)) tends to 1 only logarithmically; reference
        // values from an independent root solve.
        let ratio = |e: f64| minimax_risk(e).unwrap().m / (2.0 * e * (1.0 / e).ln());
        assert!((ratio(1e-4) - 0.711_636_535_138_674).abs() < 1e-8);
        assert!((ratio(1e-12) - 0.836_965_229_678_006).abs() < 1e-8);
        let seq: Vec<f64> = [1e-3, 1e-4, 1e-6, 1e-8, 1e-12, 1e-20]
            .iter()
            .map(|e| ratio(*e))
            .collect();
        assert!(seq.windows(2).all(|w| w[0] < w[1]));
        assert!(seq.iter().all(|r| *r < 1.0));
    }

    #[test]
    fn epsilon_bar_arithmetic() {
        let e = epsilon_bar(0.6).unwrap();
        assert!((e - 0.25 * 0.6 / (2.0f64 / 0.6).ln()).abs() < 1e-15);
        assert!((e - 0.12458).abs() < 1e-5);
        let kappa = minimax_threshold_kappa(e).unwrap();
        assert!((kappa - 1.054_426_609_910_786).abs() < 1e-8);
        assert!(epsilon_bar(2.5).is_err());
    }

    #[test]
    fn default_kappa_domain_ends_where_epsilon_bar_reaches_one() {
        assert_eq!(
            default_kappa(0.6).unwrap(),
            minimax_threshold_kappa(epsilon_bar(0.6).unwrap()).unwrap()
        );
        assert!(default_kappa(1.39).is_ok());
        assert!(epsilon_bar(1.41).unwrap() > 1.0);
        assert!(matches!(default_kappa(1.41), Err(SdlError::Domain(_))));
        assert!(default_kappa(1.9).is_err());
    }

    #[test]
    fn tau_star_examples() {
        let t = tau_star(0.025, 0.6).unwrap();
        assert!((t - 1.1222).abs() < 1e-3);
        let mu0 = 0.1 * 600f64.sqrt();
        assert!((power_g(0.05, mu0 / t) - 0.58822).abs() <= 1e-3);
        let t5 = tau_star(0.05, 0.6).unwrap();
        assert!((power_g(0.05, mu0 / t5) - 0.51177).abs() <= 2e-3);
        // δ at or below M(ε) gives an infinite noise scale.
        let m = minimax_risk(0.3).unwrap().m;
        assert!(tau_star(0.3, m).unwrap().is_infinite());
        assert!(tau_star(0.3, 0.5 * m).unwrap().is_infinite());
        let pt = TheoryPoint::new(0.3, 0.5 * m).unwrap();
        assert!((pt.power(0.05, 3.0) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn soft_threshold_risk_matches_quadrature() {
        for &(a, kappa) in &[(0.0, 1.0), (0.5, 1.3), (2.0, 1.6), (-1.5, 0.7), (6.0, 2.5)] {
            let oracle = gauss_expect(|z| {
                let v = a + z;
                let eta = if v > kappa {
                    v - kappa
                } else if v < -kappa {
                    v + kappa
                } else {
                    0.0
                };
                (eta - a).powi(2)
            });
            assert!(
                (soft_threshold_risk(a, kappa) - oracle).abs() < 1e-9,
                "a={a} k={kappa}"
            );
        }
    }

    #[test]
    fn null_signal_fixed_point_is_closed_form() {
        let (sigma0, delta, kappa) = (0.05, 0.6, 1.2);
        let fp = state_evolution_tau(0.0, 0.0, sigma0, delta, kappa).unwrap();
        let c = (2.0 / delta)
            * ((1.0 + kappa * kappa) * normal_cdf(-kappa) - kappa * normal_pdf(kappa));
        let expected = (sigma0 * sigma0 / (1.0 - c)).sqrt();
        assert!((fp.tau - expected).abs() < 1e-9);
        assert!(fp.residual <= 1e-9);
    }

    #[test]
    fn large_threshold_recovers_noise_level() {
        let fp = state_evolution_tau(0.05, 2.0, 0.1, 0.5, 40.0).unwrap();
        // Only the bias of active coordinates survives: ε·(μ₀σ₀)²/δ.
        let expected = (0.01f64 + 0.05 * 0.04 / 0.5).sqrt();
        assert!((fp.tau - expected).abs() < 1e-9);
        let fp = state_evolution_tau(0.0, 0.0, 0.1, 0.5, 40.0).unwrap();
        assert!((fp.tau - 0.1).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_below_worst_case() {
        let sigma0 = 1.0 / 600f64.sqrt();
        let kappa = minimax_threshold_kappa(0.025).unwrap();
        let fp = state_evolution_tau(0.025, 0.1 * 600f64.sqrt(), sigma0, 0.6, kappa).unwrap();
        assert!(fp.tau / sigma0 <= tau_star(0.025, 0.6).unwrap() + 1e-6);
    }

    #[test]
    fn fixed_point_map_crosses_identity_once() {
        let se = StateEvolution::new(0.025, 2.4495, 0.04, 0.6, 1.05).unwrap();
        let fp = se.solve().unwrap();
        let mut sign_changes = 0;
        let mut prev = se.map(1e-4) - 1e-4;
        for k in 1..4000 {
            let t = 1e-4 + k as f64 * 1e-4;
            let g = se.map(t) - t;
            if g.signum() != prev.signum() {
                sign_changes += 1;
                assert!((t - fp.tau).abs() < 2e-4);
            }
            prev = g;
        }
        assert_eq!(sign_changes, 1);
    }

    #[test]
    fn divergent_state_evolution_errors() {
        // Threshold near zero with δ < 1 makes the map expansive.
        assert!(matches!(
            state_evolution_tau(0.1, 1.0, 0.1, 0.3, 1e-3),
            Err(SdlError::NoFixedPoint(_))
        ));
    }

    #[test]
    fn upper_bound_reduces_for_identity() {
        let eye = DMatrix::identity(5, 5);
        let (alpha, mu, sigma, s0, n, ell) = (0.05, 0.1, 1.0, 3, 50, 2.0);
        let b = minimax_upper_bound(alpha, mu, sigma, &eye, 0, &[], s0, n, ell).unwrap();
        let direct = power_g(alpha, mu * ((n - s0) as f64 + ell).sqrt() / sigma)
            + chi2_survival((n - s0 + 1) as u64, (n - s0) as f64 + ell).unwrap();
        assert!((b - direct.min(1.0)).abs() < 1e-14);

        let f = chi2_survival((n - s0 + 1) as u64, (n - s0) as f64).unwrap();
        assert!(f > 0.0 && f < 1.0);
        let g = power_g(alpha, mu * ((n - s0) as f64).sqrt() / sigma);
        assert!(g + f < g + 1.0);
    }

    #[test]
    fn scaled_variance_halves_effective_noise() {
        let mut cov = DMatrix::identity(4, 4);
        cov[(0, 0)] = 4.0;
        assert_eq!(conditional_variance(&cov, 0, &[1, 2]).unwrap(), 4.0);
        let sigma_eff = |c: f64| 1.0 / (c * (20.0f64 - 3.0 + 1.0)).sqrt();
        assert!((sigma_eff(4.0) - 0.5 * sigma_eff(1.0)).abs() < 1e-15);
        let b4 = minimax_upper_bound(0.05, 0.1, 1.0, &cov, 0, &[1], 3, 20, 1.0).unwrap();
        let b1 = minimax_upper_bound(
            0.05,
            0.2,
            1.0,
            &DMatrix::identity(4, 4),
            0,
            &[1],
            3,
            20,
            1.0,
        )
        .unwrap();
        assert!((b4 - b1).abs() < 1e-14);
    }

    #[test]
    fn upper_bound_errors() {
        let eye = DMatrix::identity(3, 3);
        assert!(minimax_upper_bound(0.05, 0.1, 1.0, &eye, 0, &[1, 2], 2, 10, 0.0).is_err());
        assert!(minimax_upper_bound(0.05, 0.1, 1.0, &eye, 1, &[1], 3, 10, 0.0).is_err());
        let singular =
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        assert!(matches!(
            minimax_upper_bound(0.05, 0.1, 1.0, &singular, 0, &[1, 2], 3, 10, 0.0),
            Err(SdlError::Linalg(_))
        ));
    }

    #[test]
    fn corollary_examples() {
        let b = corollary1_bound(0.05, 0.1, 1.0, 600, 25, 0.0).unwrap();
        assert_eq!(b, 1.0);
        let xi = 4.0;
        let b = corollary1_bound(0.05, 0.0, 1.0, 600, 25, xi).unwrap();
        assert!((b - (0.05 + (-2.0f64).exp())).abs() < 1e-12);
        assert!(corollary1_bound(0.05, 0.1, 1.0, 600, 25, 100.0).is_err());
        let (best, _) = corollary1_bound_best(0.05, 0.05, 1.0, 600, 25, 200).unwrap();
        assert!(best < 1.0 && best > 0.05);
    }

    #[test]
    fn oracle_power_cases() {
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.0, 2.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        );
        // Column 2 lies in span of column 0.
        assert!((oracle_power(&x, 2, &[0], 1.0, 1.0, 0.05).unwrap() - 0.05).abs() < 1e-12);
        let g = oracle_power(&x, 2, &[], 0.5, 1.0, 0.05).unwrap();
        assert!((g - power_g(0.05, 0.5 * 2.0)).abs() < 1e-14);
        let dep = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            oracle_power(&dep, 2, &[0, 1], 1.0, 1.0, 0.05),
            Err(SdlError::Linalg(_))
        ));
    }

    #[test]
    fn oracle_power_ignores_orthogonal_conditioning() {
        let x = crate::solver::tests::orthogonal_design(30, 6, 77);
        let free = oracle_power(&x, 0, &[], 0.1, 1.0, 0.05).unwrap();
        let cond = oracle_power(&x, 0, &[1, 3, 5], 0.1, 1.0, 0.05).unwrap();
        assert!((free - cond).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn g_in_unit_interval_above_alpha(alpha in 0.0f64..=1.0, u in 0.0f64..20.0) {
            let g = power_g(alpha, u);
            prop_assert!(g >= alpha - 1e-12 && g <= 1.0);
        }

        #[test]
        fn minimax_residual_small(eps in 1e-6f64..0.99) {
            let r = minimax_risk(eps).unwrap();
            prop_assert!((sparsity_of_threshold(r.xi_star) - eps).abs() <= 1e-10);
        }
    }
}
