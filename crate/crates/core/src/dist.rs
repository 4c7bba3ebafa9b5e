//! Scalar distribution functions: the standard normal and the chi-squared
//! survival function.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::gamma_ur;

use crate::error::{Result, SdlError};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, Φ(x) = erfc(−x/√2)/2.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail 1 − Φ(x), computed without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of Φ on the open unit interval.
///
/// Starts from the inverse complementary error function and polishes with
/// Newton steps on the smaller tail, which keeps `|Φ(q⁻¹) − q|` at the level
/// of a few ulps.
pub fn normal_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(SdlError::Domain(format!(
            "normal quantile requires q in (0, 1), got {q}"
        )));
    }
    if q > 0.5 {
        // 1 - q is exact here.
        return Ok(-lower_quantile(1.0 - q));
    }
    Ok(lower_quantile(q))
}

fn lower_quantile(q: f64) -> f64 {
    debug_assert!(q > 0.0 && q <= 0.5);
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * q);
    for _ in 0..3 {
        let pdf = normal_pdf(x);
        if pdf <= 0.0 || !pdf.is_finite() {
            break;
        }
        let step = (normal_cdf(x) - q) / pdf;
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Chi-squared survival function F_k(x) = P(Z_k ≥ x) = Q(k/2, x/2).
pub fn chi2_survival(k: u64, x: f64) -> Result<f64> {
    if k == 0 {
        return Err(SdlError::Domain("chi-squared needs k >= 1".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(SdlError::Domain(format!(
            "chi-squared survival needs x >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_ur(k as f64 / 2.0, x / 2.0).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Bisection on Φ(x) = q with the erf-based CDF; independent of the
    /// Newton-polished quantile.
    fn bisect_quantile(q: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn cdf_at_zero_is_half() {
        assert_eq!(normal_cdf(0.0), 0.5);
    }

    #[test]
    fn quantile_matches_bisection_oracle() {
        let q75 = bisect_quantile(0.75);
        let q975 = bisect_quantile(0.975);
        assert!((q75 - 0.674_489_750_196_081_7).abs() < 1e-12);
        assert!((q975 - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.75).unwrap() - q75).abs() < 1e-12);
        assert!((normal_quantile(0.975).unwrap() - q975).abs() < 1e-12);
    }

    #[test]
    fn quantile_rejects_endpoints() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn chi2_closed_forms() {
        assert_eq!(chi2_survival(7, 0.0).unwrap(), 1.0);
        assert!((chi2_survival(2, 2.0).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        // chi-squared(1) is a squared standard normal.
        let f1 = chi2_survival(1, 1.0).unwrap();
        assert!((f1 - 2.0 * normal_sf(1.0)).abs() < 1e-10);
        assert!((f1 - 0.317_310_507_862_914_15).abs() < 1e-10);
        assert!(chi2_survival(0, 1.0).is_err());
        assert!(chi2_survival(3, -1.0).is_err());
    }

    #[test]
    fn chi2_two_dof_matches_exponential_and_decreases() {
        let mut prev = 1.0;
        for step in 1..=200 {
            let x = 0.1 * step as f64;
            let f = chi2_survival(2, x).unwrap();
            assert!((f - (-x / 2.0).exp()).abs() < 1e-10, "x = {x}");
            assert!(f < prev);
            prev = f;
        }
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(q in 1e-12f64..(1.0 - 1e-12)) {
            let x = normal_quantile(q).unwrap();
            prop_assert!((normal_cdf(x) - q).abs() <= 1e-12);
        }

        #[test]
        fn cdf_symmetry(x in -30.0f64..30.0) {
            prop_assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() <= 1e-15);
        }
    }
}
