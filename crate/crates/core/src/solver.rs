//! Lasso by cyclic coordinate descent.
//!
//! Minimizes `(1/2n)‖y − Xθ‖² + λ‖θ‖₁`. Coordinates are updated by soft
//! thresholding against a maintained residual, so inactive coordinates are
//! literal zeros and `‖θ̂‖₀` is well defined. A fit is accepted only when a
//! full sweep moves no coordinate by more than `tol` and the KKT gap,
//! recomputed from a fresh residual, is at most `tol`.

use nalgebra::{DMatrix, DVector};

use crate::debias::{mad_tau, scale_factor_d};
use crate::error::{Result, SdlError};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_GRID_SIZE: usize = 100;
pub const DEFAULT_LAMBDA_MIN_RATIO: f64 = 1e-3;

/// `sign(x)·max(|x| − t, 0)`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    pub tol: f64,
    /// Maximum number of coordinate sweeps (full or active-set).
    pub max_iter: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub lambda: f64,
    pub theta_hat: DVector<f64>,
    pub support_size: usize,
    pub iterations: usize,
    pub kkt_gap: f64,
}

impl LassoFit {
    pub fn support(&self) -> Vec<usize> {
        self.theta_hat
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Nonzero coefficients as `index,value` CSV lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for i in self.support() {
            out.push_str(&format!("{},{}\n", i, self.theta_hat[i]));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct LassoPath {
    pub grid: Vec<f64>,
    pub fits: Vec<LassoFit>,
}

/// A design/response pair with the per-column quantities the solver reuses.
pub struct LassoProblem<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    col_sq: Vec<f64>,
}

impl<'a> LassoProblem<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(SdlError::InvalidInput("empty design".into()));
        }
        if y.len() != n {
            return Err(SdlError::InvalidInput(format!(
                "response has length {}, design has {n} rows",
                y.len()
            )));
        }
        let nf = n as f64;
        let col_sq = (0..p).map(|j| x.column(j).norm_squared() / nf).collect();
        Ok(Self { x, y, col_sq })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Smallest λ whose solution is the zero vector, `‖Xᵀy‖∞/n`.
    pub fn lambda_max(&self) -> f64 {
        (self.x.tr_mul(self.y) / self.n() as f64).amax()
    }

    pub fn residual(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.y - self.x * theta
    }

    pub fn objective(&self, theta: &DVector<f64>, lambda: f64) -> f64 {
        let r = self.residual(theta);
        r.norm_squared() / (2.0 * self.n() as f64) + lambda * theta.lp_norm(1)
    }

    /// Largest violation of the Lasso optimality conditions at `theta`.
    pub fn kkt_gap(&self, theta: &DVector<f64>, lambda: f64) -> f64 {
        let r = self.residual(theta);
        self.kkt_gap_from_residual(theta, &r, lambda)
    }

    fn kkt_gap_from_residual(&self, theta: &DVector<f64>, r: &DVector<f64>, lambda: f64) -> f64 {
        let g = self.x.tr_mul(r) / self.n() as f64;
        g.iter()
            .zip(theta.iter())
            .map(|(gj, tj)| {
                if *tj == 0.0 {
                    (gj.abs() - lambda).max(0.0)
                } else {
                    (gj - lambda * tj.signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// One coordinate update; returns the absolute change.
    #[inline]
    fn update(&self, j: usize, lambda: f64, theta: &mut DVector<f64>, r: &mut DVector<f64>) -> f64 {
        let c = self.col_sq[j];
        if c == 0.0 {
            return 0.0;
        }
        let col = self.x.column(j);
        let old = theta[j];
        let rho = col.dot(r) / self.n() as f64 + c * old;
        let new = soft_threshold(rho, lambda) / c;
        let delta = new - old;
        if delta != 0.0 {
            r.axpy(-delta, &col, 1.0);
            theta[j] = new;
        }
        delta.abs()
    }

    pub fn fit(
        &self,
        lambda: f64,
        warm_start: Option<&DVector<f64>>,
        opts: &LassoOptions,
    ) -> Result<LassoFit> {
        let (n, p) = (self.n(), self.p());
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(SdlError::InvalidInput(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        if lambda == 0.0 {
            if p > n {
                return Err(SdlError::InvalidInput(
                    "lambda = 0 with p > n has no unique minimizer".into(),
                ));
            }
            if self.col_sq.contains(&0.0) {
                return Err(SdlError::InvalidInput(
                    "lambda = 0 with an all-zero design column".into(),
                ));
            }
        }
        let mut theta = match warm_start {
            Some(w) if w.len() == p => w.clone(),
            Some(w) => {
                return Err(SdlError::InvalidInput(format!(
                    "warm start has length {}, expected {p}",
                    w.len()
                )))
            }
            None => DVector::zeros(p),
        };
        let mut r = self.residual(&theta);
        let mut iterations = 0;
        let mut kkt_gap = f64::INFINITY;

        while iterations < opts.max_iter {
            let mut max_delta = 0.0f64;
            for j in 0..p {
                max_delta = max_delta.max(self.update(j, lambda, &mut theta, &mut r));
            }
            iterations += 1;

            if max_delta >= opts.tol {
                // Polish on the active set before the next full sweep.
                let active: Vec<usize> = (0..p).filter(|&j| theta[j] != 0.0).collect();
                while iterations < opts.max_iter {
                    let mut inner = 0.0f64;
                    for &j in &active {
                        inner = inner.max(self.update(j, lambda, &mut theta, &mut r));
                    }
                    iterations += 1;
                    if inner < opts.tol {
                        break;
                    }
                }
                continue;
            }

            r = self.residual(&theta);
            kkt_gap = self.kkt_gap_from_residual(&theta, &r, lambda);
            if kkt_gap <= opts.tol {
                let support_size = theta.iter().filter(|v| **v != 0.0).count();
                return Ok(LassoFit {
                    lambda,
                    theta_hat: theta,
                    support_size,
                    iterations,
                    kkt_gap,
                });
            }
        }
        if kkt_gap.is_infinite() {
            kkt_gap = self.kkt_gap(&theta, lambda);
        }
        Err(SdlError::NonConvergence {
            iterations,
            kkt_gap,
        })
    }
}

pub fn fit_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    warm_start: Option<&DVector<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<LassoFit> {
    LassoProblem::new(x, y)?.fit(lambda, warm_start, &LassoOptions { tol, max_iter })
}

/// Geometric grid of `grid_size` points from `lambda_max` down to
/// `lambda_max * lambda_min_ratio`.
pub fn lambda_grid(lambda_max: f64, grid_size: usize, lambda_min_ratio: f64) -> Result<Vec<f64>> {
    if grid_size < 2 {
        return Err(SdlError::InvalidInput("grid_size must be >= 2".into()));
    }
    if !(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0) {
        return Err(SdlError::InvalidInput(
            "lambda_min_ratio must lie in (0, 1)".into(),
        ));
    }
    if !(lambda_max > 0.0) {
        return Err(SdlError::InvalidInput(
            "lambda_max is zero: the response is orthogonal to every column".into(),
        ));
    }
    let step = lambda_min_ratio.ln() / (grid_size - 1) as f64;
    Ok((0..grid_size)
        .map(|k| {
            if k + 1 == grid_size {
                lambda_max * lambda_min_ratio
            } else {
                lambda_max * (step * k as f64).exp()
            }
        })
        .collect())
}

/// Warm-started fits along a geometric grid starting at `λ_max`.
pub fn lasso_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    grid_size: usize,
    lambda_min_ratio: f64,
    opts: &LassoOptions,
) -> Result<LassoPath> {
    let problem = LassoProblem::new(x, y)?;
    let grid = lambda_grid(problem.lambda_max(), grid_size, lambda_min_ratio)?;
    let mut fits: Vec<LassoFit> = Vec::with_capacity(grid.len());
    for &lambda in &grid {
        let warm = fits.last().map(|f| &f.theta_hat);
        fits.push(problem.fit(lambda, warm, opts)?);
    }
    Ok(LassoPath { grid, fits })
}

/// Outcome of solving `λ·d(λ) = κ·τ(λ)`.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub lambda: f64,
    pub fit: LassoFit,
    pub d: f64,
    pub tau: f64,
    pub kappa: f64,
    /// Number of Lasso fits spent (path walk plus bisection).
    pub evaluations: usize,
}

struct CalibrationPoint {
    fit: LassoFit,
    d: f64,
    tau: f64,
    gap: f64,
}

fn calibration_point(
    problem: &LassoProblem<'_>,
    kappa: f64,
    fit: LassoFit,
) -> Result<CalibrationPoint> {
    let n = problem.n();
    let d = scale_factor_d(fit.support_size, n)?;
    let residual = problem.residual(&fit.theta_hat);
    let tau = mad_tau(&residual, d, n)?;
    let gap = fit.lambda * d - kappa * tau;
    Ok(CalibrationPoint { fit, d, tau, gap })
}

/// Solves `λ·d(λ) = κ·τ(λ)` by bisection.
///
/// The bracket comes from walking the default regularization path down from
/// `λ_max` until the sign of `λd − κτ` flips. Both `d` and `τ` carry the same
/// factor `d`, so the sign is that of `λ − κ·MAD/(Φ⁻¹(0.75)√n)`, which is
/// continuous in `λ`. If the equation is already negative at `λ_max` its root
/// lies above `λ_max`, where the fit is zero and the root is explicit.
pub fn calibrate_lambda(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    kappa: f64,
    tol: f64,
    opts: &LassoOptions,
) -> Result<Calibration> {
    if !(kappa > 0.0) {
        return Err(SdlError::InvalidInput("kappa must be > 0".into()));
    }
    if !(tol > 0.0) {
        return Err(SdlError::InvalidInput(
            "calibration tolerance must be > 0".into(),
        ));
    }
    let problem = LassoProblem::new(x, y)?;
    let n = problem.n();
    let lambda_max = problem.lambda_max();
    let grid = lambda_grid(lambda_max, DEFAULT_GRID_SIZE, DEFAULT_LAMBDA_MIN_RATIO)?;
    let mut evaluations = 0;

    let converged = |pt: &CalibrationPoint| pt.gap.abs() <= tol * kappa * pt.tau;
    let finish = |pt: CalibrationPoint, evaluations: usize| Calibration {
        lambda: pt.fit.lambda,
        fit: pt.fit,
        d: pt.d,
        tau: pt.tau,
        kappa,
        evaluations,
    };

    let first = problem.fit(grid[0], None, opts)?;
    evaluations += 1;
    let top = calibration_point(&problem, kappa, first)?;
    if top.gap <= 0.0 {
        // Zero fit: d = 1 and τ does not depend on λ, so λ = κτ solves it.
        let lambda = kappa * top.tau;
        let fit = problem.fit(lambda, None, opts)?;
        evaluations += 1;
        return Ok(finish(
            calibration_point(&problem, kappa, fit)?,
            evaluations,
        ));
    }
    if converged(&top) {
        return Ok(finish(top, evaluations));
    }

    let mut hi = top;
    let mut lo: Option<CalibrationPoint> = None;
    for &lambda in &grid[1..] {
        let fit = problem.fit(lambda, Some(&hi.fit.theta_hat), opts)?;
        evaluations += 1;
        if fit.support_size >= n {
            break;
        }
        let pt = calibration_point(&problem, kappa, fit)?;
        if converged(&pt) {
            return Ok(finish(pt, evaluations));
        }
        if pt.gap < 0.0 {
            lo = Some(pt);
            break;
        }
        hi = pt;
    }
    let mut lo = match lo {
        Some(lo) => lo,
        None => {
            return Err(SdlError::CalibrationFailure {
                lambda_hi: grid[0],
                f_hi: hi.gap,
                lambda_lo: hi.fit.lambda,
                f_lo: hi.gap,
            })
        }
    };

    for _ in 0..200 {
        let mid = 0.5 * (lo.fit.lambda + hi.fit.lambda);
        if mid <= lo.fit.lambda || mid >= hi.fit.lambda {
            break;
        }
        let fit = problem.fit(mid, Some(&hi.fit.theta_hat), opts)?;
        evaluations += 1;
        let pt = calibration_point(&problem, kappa, fit)?;
        if converged(&pt) {
            return Ok(finish(pt, evaluations));
        }
        if pt.gap > 0.0 {
            hi = pt;
        } else {
            lo = pt;
        }
    }
    // The bracket has shrunk to adjacent floats. What remains of the gap is
    // solver noise from the KKT tolerance, so the closer endpoint is the root.
    let best = if hi.gap.abs() <= lo.gap.abs() { hi } else { lo };
    Ok(finish(best, evaluations))
}
