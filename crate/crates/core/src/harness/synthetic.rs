//! Replicated synthetic experiments.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, KappaSource, LambdaMode, PrecisionMode, TestKind};
use crate::covest;
use crate::debias::{debias, DebiasedEstimate};
use crate::error::{Result, SdlError};
use crate::inference::{self, CovFreeParams, TestReport};
use crate::model::{DesignSampler, Instance};
use crate::solver::{calibrate_lambda, fit_lasso, LassoFit, LassoOptions};
use crate::theory::{self, TheoryPoint};

/// Everything computed for one replicate, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct ReplicateAnalysis {
    pub instance: Instance,
    pub fit: LassoFit,
    pub estimate: DebiasedEstimate,
    pub kappa: Option<f64>,
    /// Diagonal of the precision used for standardization; `None` means 1.
    pub precision_diag: Option<Vec<f64>>,
    /// Ridge added to the estimated covariance before inversion.
    pub ridge: Option<f64>,
    /// One report per configured α, in config order.
    pub reports: Vec<TestReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaOutcome {
    pub alpha: f64,
    pub type_i: Option<f64>,
    pub power: Option<f64>,
    pub theory: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub lambda: f64,
    pub kappa: Option<f64>,
    pub tau: f64,
    pub d: f64,
    pub support_size: usize,
    /// Optimality certificate of the Lasso fit.
    pub kkt_gap: f64,
    pub ridge: Option<f64>,
    pub per_alpha: Vec<AlphaOutcome>,
    /// Test statistics in coordinate order.
    pub z_scores: Vec<f64>,
    pub active: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    /// The error message if any stage failed.
    pub outcome: std::result::Result<ReplicateOutcome, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub alpha: f64,
    pub type_i_mean: Option<f64>,
    pub type_i_std: Option<f64>,
    pub power_mean: Option<f64>,
    pub power_std: Option<f64>,
    pub theory_mean: Option<f64>,
    pub replicates_ok: usize,
    pub replicates_failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub replicates: Vec<ReplicateRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl ExperimentReport {
    pub fn failed(&self) -> usize {
        self.replicates
            .iter()
            .filter(|r| r.outcome.is_err())
            .count()
    }
}

/// Mean and sample (n − 1) standard deviation; the std is `None` below two
/// values.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (Some(mean), Some(var.sqrt()))
}

/// Per-α aggregates over the successful replicates.
pub fn aggregate(alphas: &[f64], replicates: &[ReplicateRecord]) -> Vec<AggregateRow> {
    let ok: Vec<&ReplicateOutcome> = replicates
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok())
        .collect();
    let failed = replicates.len() - ok.len();
    alphas
        .iter()
        .enumerate()
        .map(|(k, &alpha)| {
            let pick = |f: fn(&AlphaOutcome) -> Option<f64>| -> Vec<f64> {
                ok.iter().filter_map(|o| f(&o.per_alpha[k])).collect()
            };
            let (type_i_mean, type_i_std) = mean_std(&pick(|a| a.type_i));
            let (power_mean, power_std) = mean_std(&pick(|a| a.power));
            let (theory_mean, _) = mean_std(&pick(|a| a.theory));
            AggregateRow {
                alpha,
                type_i_mean,
                type_i_std,
                power_mean,
                power_std,
                theory_mean,
                replicates_ok: ok.len(),
                replicates_failed: failed,
            }
        })
        .collect()
}

/// A validated configuration with its design sampler and the per-experiment
/// constants shared by all replicates.
pub struct Experiment {
    config: ExperimentConfig,
    sampler: DesignSampler,
    /// Exact Σ⁻¹, `None` for the identity model.
    exact_precision: Option<DMatrix<f64>>,
    kappa: Option<f64>,
    /// Standard-design prediction at each α.
    standard_theory: Option<Vec<f64>>,
    opts: LassoOptions,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let model = config.covariance.resolve()?;
        let sampler = DesignSampler::new(model, config.p)?;
        let exact_precision = sampler.precision()?;
        let (n, p) = (config.n as f64, config.p as f64);
        let kappa = match config.lambda {
            LambdaMode::Calibrated { kappa } => Some(match kappa {
                KappaSource::EpsilonBar => theory::default_kappa(n / p)?,
                KappaSource::TrueEpsilon => theory::minimax_threshold_kappa(config.s0 as f64 / p)?,
            }),
            _ => None,
        };
        let standard_theory =
            if sampler.model().is_identity() && config.s0 > 0 && config.s0 < config.p {
                let point = TheoryPoint::new(config.s0 as f64 / p, n / p)?;
                let mu0 = config.mu * n.sqrt() / config.sigma;
                Some(config.alpha.iter().map(|a| point.power(*a, mu0)).collect())
            } else {
                None
            };
        Ok(Self {
            config,
            sampler,
            exact_precision,
            kappa,
            standard_theory,
            opts: LassoOptions::default(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn sampler(&self) -> &DesignSampler {
        &self.sampler
    }

    pub fn seed_of(&self, replicate: usize) -> u64 {
        self.config.seed.wrapping_add(replicate as u64)
    }

    fn fit(&self, inst: &Instance) -> Result<LassoFit> {
        let cfg = &self.config;
        match cfg.lambda {
            LambdaMode::Calibrated { .. } => {
                let kappa = self.kappa.expect("calibrated mode has kappa");
                Ok(calibrate_lambda(&inst.x, &inst.y, kappa, cfg.calibration_tol, &self.opts)?.fit)
            }
            LambdaMode::Fixed { value } => fit_lasso(
                &inst.x,
                &inst.y,
                value,
                None,
                self.opts.tol,
                self.opts.max_iter,
            ),
            LambdaMode::Recommended => {
                let t = cfg.covfree.t;
                let lambda =
                    4.0 * cfg.sigma * ((t * t + 2.0 * (cfg.p as f64).ln()) / cfg.n as f64).sqrt();
                fit_lasso(
                    &inst.x,
                    &inst.y,
                    lambda,
                    None,
                    self.opts.tol,
                    self.opts.max_iter,
                )
            }
        }
    }

    /// Runs one replicate end to end.
    pub fn analyze(&self, replicate: usize) -> Result<ReplicateAnalysis> {
        let cfg = &self.config;
        let inst = self
            .sampler
            .sample(&cfg.signal(), cfg.n, cfg.sigma, self.seed_of(replicate))?;
        let fit = self.fit(&inst)?;

        let mut ridge = None;
        let mut estimated_cov = None;
        let precision = match cfg.precision {
            PrecisionMode::Exact => self.exact_precision.clone(),
            PrecisionMode::Identity => None,
            PrecisionMode::Estimated => {
                let est = covest::estimate_covariance(&inst.x)?;
                let (inv, added) = covest::invert_with_ridge(&est.sigma_hat)?;
                ridge = Some(added);
                estimated_cov = Some(est.sigma_hat);
                Some(inv)
            }
        };
        let precision_diag = precision
            .as_ref()
            .map(|m| m.diagonal().iter().copied().collect::<Vec<f64>>());

        let (estimate, reports, precision_diag) = match cfg.test {
            TestKind::Sdl => {
                let est = debias(&fit, &inst.x, &inst.y, precision.as_ref())?;
                let reports = self.level_reports(|alpha| {
                    inference::p_values(&est, precision_diag.as_deref(), alpha)
                })?;
                (est, reports, precision_diag)
            }
            TestKind::Covfree => {
                let est = debias(&fit, &inst.x, &inst.y, None)?;
                let max_offdiag = match (cfg.precision, &estimated_cov) {
                    (PrecisionMode::Estimated, Some(s)) => covest::row_offdiag_max(s)
                        .into_iter()
                        .map(|m| covest::offdiag_bound(m, cfg.p, cfg.n))
                        .collect(),
                    (PrecisionMode::Identity, _) => vec![0.0; cfg.p],
                    _ => covest::row_offdiag_max(self.sampler.covariance()),
                };
                let mut params = CovFreeParams::with_defaults(&fit, max_offdiag);
                params.phi0 = cfg.covfree.phi0;
                params.t = cfg.covfree.t;
                if let Some(s) = cfg.covfree.s0_bound {
                    params.s0_bound = s;
                }
                let reports = self
                    .level_reports(|alpha| inference::covfree_test(&fit, &est, &params, alpha))?;
                (est, reports, None)
            }
        };
        Ok(ReplicateAnalysis {
            instance: inst,
            fit,
            estimate,
            kappa: self.kappa,
            precision_diag,
            ridge,
            reports,
        })
    }

    fn level_reports(&self, f: impl Fn(f64) -> Result<TestReport>) -> Result<Vec<TestReport>> {
        self.config.alpha.iter().map(|a| f(*a)).collect()
    }

    /// `G(α, min_{i∈S₀} |θ₀ᵢ| / (τ √(Σ⁻¹)ᵢᵢ))` using the true covariance and
    /// the realized τ.
    fn general_theory(&self, analysis: &ReplicateAnalysis, alpha: f64) -> Option<f64> {
        let inst = &analysis.instance;
        if inst.support.is_empty() {
            return None;
        }
        let diag = |i: usize| self.exact_precision.as_ref().map_or(1.0, |m| m[(i, i)]);
        let mu0 = inst
            .support
            .iter()
            .map(|&i| inst.theta0[i].abs() / diag(i).sqrt())
            .fold(f64::INFINITY, f64::min);
        Some(theory::power_g(alpha, mu0 / analysis.estimate.tau))
    }

    pub fn summarize(&self, analysis: &ReplicateAnalysis) -> Result<ReplicateOutcome> {
        let active = analysis.instance.active_mask();
        let mut per_alpha = Vec::with_capacity(self.config.alpha.len());
        for (k, report) in analysis.reports.iter().enumerate() {
            let summary = inference::evaluate_mask(&report.decisions, &active)?;
            let theory = match &self.standard_theory {
                Some(values) => Some(values[k]),
                None => self.general_theory(analysis, report.alpha),
            };
            per_alpha.push(AlphaOutcome {
                alpha: report.alpha,
                type_i: summary.type_i,
                power: summary.power,
                theory,
            });
        }
        Ok(ReplicateOutcome {
            lambda: analysis.fit.lambda,
            kappa: analysis.kappa,
            tau: analysis.estimate.tau,
            d: analysis.estimate.d,
            support_size: analysis.fit.support_size,
            kkt_gap: analysis.fit.kkt_gap,
            ridge: analysis.ridge,
            per_alpha,
            z_scores: analysis
                .reports
                .first()
                .map(|r| r.z_scores.clone())
                .unwrap_or_default(),
            active,
        })
    }

    pub fn run_replicate(&self, replicate: usize) -> ReplicateRecord {
        let outcome = self
            .analyze(replicate)
            .and_then(|a| self.summarize(&a))
            .map_err(|e| e.to_string());
        ReplicateRecord {
            replicate,
            seed: self.seed_of(replicate),
            outcome,
        }
    }

    /// Runs all replicates on `workers` threads; records come back in
    /// replicate order.
    pub fn run(&self, workers: usize) -> Result<ExperimentReport> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| SdlError::Config(format!("thread pool: {e}")))?;
        let replicates: Vec<ReplicateRecord> = pool.install(|| {
            (0..self.config.replicates)
                .into_par_iter()
                .map(|r| self.run_replicate(r))
                .collect()
        });
        Ok(ExperimentReport {
            aggregates: aggregate(&self.config.alpha, &replicates),
            config: self.config.clone(),
            replicates,
        })
    }
}

pub fn run_synthetic(config: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    Experiment::new(config.clone())?.run(workers)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub power: f64,
    /// Set when τ* is infinite and the curve collapses to `(α, α)`.
    pub degenerate: bool,
}

/// `(α, G(α, μ₀/τ*))` at each α of the grid.
pub fn emit_power_curve(
    epsilon: f64,
    delta: f64,
    mu0: f64,
    alpha_grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    let point = TheoryPoint::new(epsilon, delta)?;
    alpha_grid
        .iter()
        .map(|&alpha| {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(SdlError::Domain(format!("alpha {alpha} outside [0, 1]")));
            }
            Ok(CurvePoint {
                alpha,
                power: point.power(alpha, mu0),
                degenerate: !point.is_finite(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::standard(200, 120, 6, 0.5);
        cfg.replicates = 3;
        cfg.alpha = vec![0.05, 0.1];
        cfg
    }

    #[test]
    fn mean_std_conventions() {
        assert_eq!(mean_std(&[]), (None, None));
        assert_eq!(mean_std(&[2.0]), (Some(2.0), None));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, Some(2.0));
        assert!((s.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn replicate_order_and_aggregates() {
        let report = run_synthetic(&small(), 2).unwrap();
        assert_eq!(report.replicates.len(), 3);
        for (r, rec) in report.replicates.iter().enumerate() {
            assert_eq!(rec.replicate, r);
            assert_eq!(rec.seed, r as u64);
            let out = rec.outcome.as_ref().unwrap();
            assert_eq!(out.per_alpha.len(), 2);
            assert!(out.tau > 0.0 && out.d >= 1.0);
        }
        assert_eq!(report.aggregates.len(), 2);
        assert_eq!(report.aggregates[0].replicates_ok, 3);
    }

    #[test]
    fn null_model_has_no_power_column() {
        let mut cfg = small();
        cfg.s0 = 0;
        let report = run_synthetic(&cfg, 1).unwrap();
        for row in &report.aggregates {
            assert!(row.power_mean.is_none());
            assert!(row.theory_mean.is_none());
            assert!(row.type_i_mean.is_some());
        }
    }

    #[test]
    fn standard_theory_column_matches_tau_star() {
        let report = run_synthetic(&small(), 1).unwrap();
        let point = TheoryPoint::new(6.0 / 200.0, 0.6).unwrap();
        let expected = point.power(0.05, 0.5 * 120f64.sqrt());
        assert!((report.aggregates[0].theory_mean.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn failed_stage_is_recorded() {
        let mut cfg = small();
        // A tiny fixed λ saturates the support, so d is undefined.
        cfg.lambda = LambdaMode::Fixed { value: 1e-6 };
        cfg.replicates = 1;
        let report = run_synthetic(&cfg, 1).unwrap();
        assert_eq!(report.failed(), 1);
        assert_eq!(report.aggregates[0].replicates_failed, 1);
        assert!(report.aggregates[0].type_i_mean.is_none());
    }

    #[test]
    fn power_curve_cases() {
        let mu0 = 0.15 * 600f64.sqrt();
        let curve = emit_power_curve(0.025, 0.6, mu0, &[0.01, 0.025, 0.05]).unwrap();
        assert!(curve.windows(2).all(|w| w[0].power <= w[1].power));
        assert!((curve[2].power - 0.9057).abs() <= 2e-3);
        assert!(!curve[0].degenerate);

        let m = theory::minimax_risk(0.2).unwrap().m;
        let flat = emit_power_curve(0.2, 0.9 * m, 3.0, &[0.01, 0.05, 0.5]).unwrap();
        for pt in flat {
            assert!(pt.degenerate);
            assert!((pt.power - pt.alpha).abs() < 1e-15);
        }
    }
}
