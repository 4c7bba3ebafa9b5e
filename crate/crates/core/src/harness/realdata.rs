//! Real-data pipeline: ground truth from full-data least squares, then the
//! SDL-test with estimated covariance on random row subsamples.
//!
//! Preprocessing: missing entries (`?` or empty) take their column mean;
//! columns are centered; numerically dependent columns are removed in
//! column-pivoted order; the kept columns are scaled to norm `√n_tot`. The
//! response is centered (not scaled) so that the intercept-free model is
//! meaningful on subsamples.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synthetic::{aggregate, AggregateRow, AlphaOutcome, ReplicateOutcome, ReplicateRecord};
use crate::covest;
use crate::debias::debias;
use crate::error::{Result, SdlError};
use crate::inference;
use crate::linalg;
use crate::solver::{calibrate_lambda, fit_lasso, LassoOptions};
use crate::theory;

fn default_subsample() -> usize {
    84
}

fn default_threshold() -> f64 {
    0.04
}

fn default_alpha() -> Vec<f64> {
    vec![0.01, 0.025, 0.05]
}

fn default_replicates() -> usize {
    20
}

fn default_rank_tol() -> f64 {
    1e-6
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealDataConfig {
    pub data_path: PathBuf,
    #[serde(default = "default_subsample")]
    pub subsample_n: usize,
    /// Coordinates with `|θ₀ᵢ|` above this are active.
    #[serde(default = "default_threshold")]
    pub active_threshold: f64,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Zero-based; defaults to the last column.
    #[serde(default)]
    pub response_column: Option<usize>,
    /// Zero-based columns that are neither predictors nor response.
    #[serde(default)]
    pub ignore_columns: Vec<usize>,
    #[serde(default)]
    pub header: bool,
    /// Relative pivot tolerance for dropping dependent columns.
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    /// Keep at most this many predictors, dropping the smallest pivots.
    #[serde(default)]
    pub max_predictors: Option<usize>,
    #[serde(default = "default_true")]
    pub center_response: bool,
    /// Fixed λ instead of calibration.
    #[serde(default)]
    pub lambda: Option<f64>,
}

impl RealDataConfig {
    pub fn new(data_path: impl Into<PathBuf>) -> Self {
        Self {
            data_path: data_path.into(),
            subsample_n: default_subsample(),
            active_threshold: default_threshold(),
            alpha: default_alpha(),
            replicates: default_replicates(),
            seed: 0,
            response_column: None,
            ignore_columns: Vec::new(),
            header: false,
            rank_tol: default_rank_tol(),
            max_predictors: None,
            center_response: true,
            lambda: None,
        }
    }

    /// Layout of the UCI communities-and-crime file: five leading
    /// identifier columns, 122 predictors, response last, no header;
    /// 106 predictors are kept.
    pub fn communities(data_path: impl Into<PathBuf>) -> Self {
        Self {
            ignore_columns: (0..5).collect(),
            max_predictors: Some(106),
            ..Self::new(data_path)
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| SdlError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| SdlError::Config(e.to_string()))?;
        if cfg.data_path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data_path = dir.join(&cfg.data_path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SdlError::Config(m.to_string()));
        if self.subsample_n < 2 {
            return bad("subsample_n must be >= 2");
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1");
        }
        if self.alpha.is_empty() || self.alpha.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad("alpha levels must be a non-empty list in (0, 1)");
        }
        if self.active_threshold.is_nan() || self.active_threshold < 0.0 {
            return bad("active_threshold must be >= 0");
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return bad("rank_tol must lie in (0, 1)");
        }
        if self.max_predictors == Some(0) {
            return bad("max_predictors must be >= 1");
        }
        if matches!(self.lambda, Some(l) if !(l > 0.0)) {
            return bad("lambda must be > 0");
        }
        Ok(())
    }
}

/// Raw numeric table; `None` marks a missing entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: Vec<Vec<Option<f64>>>,
    pub ncols: usize,
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field == "?"
}

/// Reads a CSV; columns in `skip` may hold arbitrary text and are read as
/// missing.
pub fn read_table(path: &Path, header: bool, skip: &[usize]) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| SdlError::Config(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut ncols = None;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| SdlError::Config(format!("{}: {e}", path.display())))?;
        if *ncols.get_or_insert(record.len()) != record.len() {
            return Err(SdlError::Config(format!(
                "{}: row {r} has {} fields",
                path.display(),
                record.len()
            )));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, f)| {
                if skip.contains(&c) || is_missing(f) {
                    Ok(None)
                } else {
                    f.parse::<f64>().map(Some).map_err(|_| {
                        SdlError::Config(format!(
                            "{}: row {r}, column {c}: '{f}' is not a number",
                            path.display()
                        ))
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let ncols =
        ncols.ok_or_else(|| SdlError::Config(format!("{}: no data rows", path.display())))?;
    Ok(Table { rows, ncols })
}

/// Full-data design, response and ground truth after preprocessing.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub theta0: DVector<f64>,
    pub active: Vec<bool>,
    /// Original table column of each predictor in `x`.
    pub predictor_columns: Vec<usize>,
    /// Predictor columns removed for dependence or by `max_predictors`.
    pub dropped_columns: Vec<usize>,
    pub imputed_entries: usize,
}

impl PreparedData {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

pub fn prepare(table: &Table, cfg: &RealDataConfig) -> Result<PreparedData> {
    let n = table.rows.len();
    let response = cfg.response_column.unwrap_or(table.ncols - 1);
    if response >= table.ncols {
        return Err(SdlError::Config(format!(
            "response column {response} out of range"
        )));
    }
    let candidates: Vec<usize> = (0..table.ncols)
        .filter(|c| *c != response && !cfg.ignore_columns.contains(c))
        .collect();
    if candidates.is_empty() {
        return Err(SdlError::Config("no predictor columns".into()));
    }

    let mut y = DVector::zeros(n);
    for (r, row) in table.rows.iter().enumerate() {
        y[r] = row[response]
            .ok_or_else(|| SdlError::Config(format!("response missing in row {r}")))?;
    }
    if cfg.center_response {
        y.add_scalar_mut(-y.mean());
    }

    let mut imputed_entries = 0;
    let mut raw = DMatrix::zeros(n, candidates.len());
    for (k, &c) in candidates.iter().enumerate() {
        let present: Vec<f64> = table.rows.iter().filter_map(|row| row[c]).collect();
        let mean = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        for (r, row) in table.rows.iter().enumerate() {
            raw[(r, k)] = row[c].unwrap_or_else(|| {
                imputed_entries += 1;
                mean
            });
        }
        let centered_mean = raw.column(k).mean();
        raw.column_mut(k).add_scalar_mut(-centered_mean);
    }

    let mut order = linalg::pivot_order(&raw, cfg.rank_tol);
    if let Some(cap) = cfg.max_predictors {
        order.truncate(cap);
    }
    let mut kept: Vec<usize> = order.into_iter().map(|(k, _)| k).collect();
    kept.sort_unstable();
    if kept.len() > n {
        return Err(SdlError::Config(format!(
            "{} independent predictors exceed {n} rows",
            kept.len()
        )));
    }
    let dropped_columns = (0..candidates.len())
        .filter(|k| kept.binary_search(k).is_err())
        .map(|k| candidates[k])
        .collect();

    let target = (n as f64).sqrt();
    let mut x = raw.select_columns(&kept);
    for mut col in x.column_iter_mut() {
        let norm = col.norm();
        col *= target / norm;
    }
    let theta0 = linalg::least_squares(&x, &y)
        .map_err(|e| SdlError::Config(format!("full-data least squares failed: {e}")))?;
    let active = theta0
        .iter()
        .map(|v| v.abs() > cfg.active_threshold)
        .collect();
    Ok(PreparedData {
        x,
        y,
        theta0,
        active,
        predictor_columns: kept.iter().map(|&k| candidates[k]).collect(),
        dropped_columns,
        imputed_entries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealDataReport {
    pub config: RealDataConfig,
    pub n_total: usize,
    pub p: usize,
    pub n_active: usize,
    pub predictor_columns: Vec<usize>,
    pub dropped_columns: Vec<usize>,
    pub replicates: Vec<ReplicateRecord>,
    pub aggregates: Vec<AggregateRow>,
}

/// Sorted row indices of subsample `replicate`.
pub fn subsample_rows(n_total: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = index::sample(&mut rng, n_total, size).into_vec();
    rows.sort_unstable();
    rows
}

fn run_subsample(data: &PreparedData, cfg: &RealDataConfig, seed: u64) -> Result<ReplicateOutcome> {
    let opts = LassoOptions::default();
    let rows = subsample_rows(data.n(), cfg.subsample_n, seed);
    let x = data.x.select_rows(&rows);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| data.y[r]));

    let (fit, kappa) = match cfg.lambda {
        Some(lambda) => (
            fit_lasso(&x, &y, lambda, None, opts.tol, opts.max_iter)?,
            None,
        ),
        None => {
            let delta = cfg.subsample_n as f64 / data.p() as f64;
            let kappa = theory::default_kappa(delta)?;
            (
                calibrate_lambda(&x, &y, kappa, 1e-6, &opts)?.fit,
                Some(kappa),
            )
        }
    };
    let cov = covest::estimate_covariance(&x)?;
    let (precision, ridge) = covest::invert_with_ridge(&cov.sigma_hat)?;
    let diag: Vec<f64> = precision.diagonal().iter().copied().collect();
    let est = debias(&fit, &x, &y, Some(&precision))?;

    let mut per_alpha = Vec::with_capacity(cfg.alpha.len());
    let mut z_scores = Vec::new();
    for (k, &alpha) in cfg.alpha.iter().enumerate() {
        let report = inference::p_values(&est, Some(&diag), alpha)?;
        let summary = inference::evaluate_mask(&report.decisions, &data.active)?;
        per_alpha.push(AlphaOutcome {
            alpha,
            type_i: summary.type_i,
            power: summary.power,
            theory: None,
        });
        if k == 0 {
            z_scores = report.z_scores;
        }
    }
    Ok(ReplicateOutcome {
        lambda: fit.lambda,
        kappa,
        tau: est.tau,
        d: est.d,
        support_size: fit.support_size,
        kkt_gap: fit.kkt_gap,
        ridge: Some(ridge),
        per_alpha,
        z_scores,
        active: data.active.clone(),
    })
}

pub fn run_prepared(
    data: &PreparedData,
    cfg: &RealDataConfig,
    workers: usize,
) -> Result<RealDataReport> {
    cfg.validate()?;
    if cfg.subsample_n > data.n() {
        return Err(SdlError::Config(format!(
            "subsample_n = {} exceeds {} rows",
            cfg.subsample_n,
            data.n()
        )));
    }
    if cfg.lambda.is_none() {
        theory::default_kappa(cfg.subsample_n as f64 / data.p() as f64)
            .map_err(|e| SdlError::Config(format!("calibrated lambda: {e}")))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SdlError::Config(format!("thread pool: {e}")))?;
    let replicates: Vec<ReplicateRecord> = pool.install(|| {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = cfg.seed.wrapping_add(r as u64);
                ReplicateRecord {
                    replicate: r,
                    seed,
                    outcome: run_subsample(data, cfg, seed).map_err(|e| e.to_string()),
                }
            })
            .collect()
    });
    Ok(RealDataReport {
        aggregates: aggregate(&cfg.alpha, &replicates),
        config: cfg.clone(),
        n_total: data.n(),
        p: data.p(),
        n_active: data.active.iter().filter(|a| **a).count(),
        predictor_columns: data.predictor_columns.clone(),
        dropped_columns: data.dropped_columns.clone(),
        replicates,
    })
}

pub fn run_realdata(cfg: &RealDataConfig, workers: usize) -> Result<RealDataReport> {
    cfg.validate()?;
    let mut skip = cfg.ignore_columns.clone();
    skip.sort_unstable();
    let table = read_table(&cfg.data_path, cfg.header, &skip)?;
    let data = prepare(&table, cfg)?;
    run_prepared(&data, cfg, workers)
}
