//! Debiased Lasso estimate `θᵘ = θ̂ + (d/n) Σ⁻¹ Xᵀ(y − Xθ̂)` with the
//! degrees-of-freedom factor `d = (1 − ‖θ̂‖₀/n)⁻¹` and the MAD noise scale.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dist::normal_quantile;
use crate::error::{Result, SdlError};
use crate::linalg;
use crate::solver::LassoFit;

/// Which inverse covariance went into the correction term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PrecisionKind {
    Identity,
    Supplied,
}

#[derive(Debug, Clone)]
pub struct DebiasedEstimate {
    pub theta_u: DVector<f64>,
    pub d: f64,
    pub tau: f64,
    /// Scaled residual `(d/√n)(y − Xθ̂)`.
    pub r: DVector<f64>,
    pub used_precision: PrecisionKind,
    /// Unpreconditioned correction `(d/n) Xᵀ(y − Xθ̂)`.
    pub correction: DVector<f64>,
}

impl DebiasedEstimate {
    /// `index,theta_hat,theta_u,z_score` rows; `z = θᵘ/(τ√diag)`.
    pub fn to_csv(&self, theta_hat: &DVector<f64>, precision_diag: Option<&[f64]>) -> String {
        let mut out = String::from("index,theta_hat,theta_u,z_score\n");
        for i in 0..self.theta_u.len() {
            let scale = precision_diag.map_or(1.0, |d| d[i].sqrt());
            let z = self.theta_u[i] / (self.tau * scale);
            out.push_str(&format!(
                "{},{},{},{}\n",
                i, theta_hat[i], self.theta_u[i], z
            ));
        }
        out
    }
}

/// `(1 − support_size/n)⁻¹`.
pub fn scale_factor_d(support_size: usize, n: usize) -> Result<f64> {
    if support_size >= n {
        return Err(SdlError::DegenerateSupport { support_size, n });
    }
    Ok(1.0 / (1.0 - support_size as f64 / n as f64))
}

/// Position (1-based, counted from the largest) of the order statistic used
/// by the MAD estimate: `⌈n/2⌉`.
pub fn mad_rank(n: usize) -> usize {
    n.div_ceil(2)
}

/// `τ = |v|_(ℓ) · d / (√n · Φ⁻¹(0.75))` with `ℓ = ⌈n/2⌉` and `|v|_(ℓ)` the
/// ℓ-th largest absolute residual.
pub fn mad_tau(residual: &DVector<f64>, d: f64, n: usize) -> Result<f64> {
    if n < 2 || residual.len() != n {
        return Err(SdlError::InvalidInput(format!(
            "MAD scale needs a residual of length n >= 2 (n = {n}, len = {})",
            residual.len()
        )));
    }
    let mut abs: Vec<f64> = residual.iter().map(|v| v.abs()).collect();
    if abs.iter().all(|v| *v == 0.0) {
        return Err(SdlError::ZeroScale);
    }
    let rank = mad_rank(n);
    let (_, kth, _) = abs.select_nth_unstable_by(rank - 1, |a, b| b.total_cmp(a));
    let q75 = normal_quantile(0.75)?;
    Ok(*kth * d / ((n as f64).sqrt() * q75))
}

/// Debias a Lasso fit.
///
/// With `precision = None` the identity fast path is used; otherwise the
/// supplied symmetric `Σ⁻¹` multiplies the correction term.
pub fn debias(
    fit: &LassoFit,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    precision: Option<&DMatrix<f64>>,
) -> Result<DebiasedEstimate> {
    let (n, p) = x.shape();
    if y.len() != n || fit.theta_hat.len() != p {
        return Err(SdlError::InvalidInput(
            "fit, design and response sizes disagree".into(),
        ));
    }
    if let Some(m) = precision {
        if m.nrows() != p || m.ncols() != p {
            return Err(SdlError::InvalidPrecision(format!(
                "precision is {}x{}, expected {p}x{p}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(1.0);
        if linalg::asymmetry(m) > 1e-10 * scale {
            return Err(SdlError::InvalidPrecision("matrix is not symmetric".into()));
        }
    }
    let d = scale_factor_d(fit.support_size, n)?;
    let residual = y - x * &fit.theta_hat;
    let tau = mad_tau(&residual, d, n)?;
    let nf = n as f64;
    let correction = x.tr_mul(&residual) * (d / nf);
    let (theta_u, used_precision) = match precision {
        None => (&fit.theta_hat + &correction, PrecisionKind::Identity),
        Some(m) => (&fit.theta_hat + m * &correction, PrecisionKind::Supplied),
    };
    let r = residual * (d / nf.sqrt());
    Ok(DebiasedEstimate {
        theta_u,
        d,
        tau,
        r,
        used_precision,
        correction,
    })
}
