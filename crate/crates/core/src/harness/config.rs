//! Experiment configuration, read from TOML.
//!
//! ```toml
//! p = 1000
//! n = 600
//! s0 = 25
//! mu = 0.1
//! alpha = [0.05]
//! replicates = 10
//! seed = 0
//! precision = "exact"        # exact | estimated | identity
//! test = "sdl"               # sdl | covfree
//!
//! [covariance]
//! kind = "circulant"         # identity | circulant | dense (path = "...")
//! band = 5
//! off = 0.1
//!
//! [lambda]
//! mode = "calibrated"        # calibrated | fixed (value = ...) | recommended
//! kappa = "epsilon_bar"      # epsilon_bar | true_epsilon
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdlError};
use crate::model::{CovarianceModel, SignalSpec};
use crate::theory;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceSpec {
    #[default]
    Identity,
    Circulant {
        band: usize,
        off: f64,
    },
    /// Comma-separated p×p matrix, one row per line.
    Dense {
        path: PathBuf,
    },
}

impl CovarianceSpec {
    pub fn resolve(&self) -> Result<CovarianceModel> {
        match self {
            CovarianceSpec::Identity => Ok(CovarianceModel::Identity),
            CovarianceSpec::Circulant { band, off } => Ok(CovarianceModel::Circulant {
                band: *band,
                off: *off,
            }),
            CovarianceSpec::Dense { path } => read_matrix_csv(path).map(CovarianceModel::Dense),
        }
    }

    fn rebase(&mut self, dir: &Path) {
        if let CovarianceSpec::Dense { path } = self {
            if path.is_relative() {
                *path = dir.join(&*path);
            }
        }
    }
}

/// Reads a headerless numeric CSV into a matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| SdlError::Config(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| SdlError::Config(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| SdlError::Config(format!("{}: bad number '{f}'", path.display())))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.iter().any(|r| r.len() != ncols) {
        return Err(SdlError::Config(format!(
            "{}: ragged or empty matrix",
            path.display()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaSource {
    /// κ(ε̄) with ε̄ = 0.25δ/log(2/δ); does not need the true sparsity.
    #[default]
    EpsilonBar,
    /// κ(s₀/p).
    TrueEpsilon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaMode {
    /// Solve `λd = κτ`.
    Calibrated {
        #[serde(default)]
        kappa: KappaSource,
    },
    Fixed {
        value: f64,
    },
    /// `4σ√((t² + 2 log p)/n)` with the known noise level.
    Recommended,
}

impl Default for LambdaMode {
    fn default() -> Self {
        LambdaMode::Calibrated {
            kappa: KappaSource::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionMode {
    /// Inverse of the true covariance.
    #[default]
    Exact,
    /// Inverse of the thresholded sample covariance.
    Estimated,
    /// Ignore correlations.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    #[default]
    Sdl,
    Covfree,
}

/// Inputs of the covariance-free test that cannot be estimated from data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovFreeSettings {
    #[serde(default = "one")]
    pub phi0: f64,
    /// Defaults to the Lasso support size when absent.
    #[serde(default)]
    pub s0_bound: Option<usize>,
    #[serde(default = "two")]
    pub t: f64,
}

impl Default for CovFreeSettings {
    fn default() -> Self {
        Self {
            phi0: 1.0,
            s0_bound: None,
            t: 2.0,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn default_alpha() -> Vec<f64> {
    vec![0.05]
}

fn default_replicates() -> usize {
    10
}

fn default_calibration_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: usize,
    pub n: usize,
    pub s0: usize,
    #[serde(default)]
    pub mu: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default)]
    pub covariance: CovarianceSpec,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Replicate `r` uses seed `seed + r`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lambda: LambdaMode,
    #[serde(default)]
    pub precision: PrecisionMode,
    #[serde(default)]
    pub test: TestKind,
    #[serde(default)]
    pub covfree: CovFreeSettings,
    /// Relative tolerance of the calibration equation.
    #[serde(default = "default_calibration_tol")]
    pub calibration_tol: f64,
}

impl ExperimentConfig {
    /// Standard Gaussian design with calibrated λ and exact precision.
    pub fn standard(p: usize, n: usize, s0: usize, mu: f64) -> Self {
        Self {
            p,
            n,
            s0,
            mu,
            sigma: 1.0,
            covariance: CovarianceSpec::Identity,
            alpha: default_alpha(),
            replicates: default_replicates(),
            seed: 0,
            lambda: LambdaMode::default(),
            precision: PrecisionMode::Exact,
            test: TestKind::Sdl,
            covfree: CovFreeSettings::default(),
            calibration_tol: default_calibration_tol(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| SdlError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file; a relative dense-covariance path is taken relative
    /// to the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| SdlError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.covariance.rebase(dir);
        }
        Ok(cfg)
    }

    pub fn signal(&self) -> SignalSpec {
        SignalSpec {
            p: self.p,
            s0: self.s0,
            mu: self.mu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SdlError::Config(msg));
        if self.p == 0 || self.n < 2 {
            return bad(format!(
                "need p >= 1 and n >= 2 (p = {}, n = {})",
                self.p, self.n
            ));
        }
        if self.s0 > self.p {
            return bad(format!("s0 = {} exceeds p = {}", self.s0, self.p));
        }
        if self.s0 > 0 && !(self.mu > 0.0) {
            return bad("mu must be > 0 when s0 > 0".into());
        }
        if !(self.sigma > 0.0) {
            return bad("sigma must be > 0".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if self.alpha.is_empty() || self.alpha.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad("alpha levels must be a non-empty list in (0, 1)".into());
        }
        if let CovarianceSpec::Circulant { band, .. } = self.covariance {
            if band == 0 || 2 * band >= self.p {
                return bad(format!("circulant band {band} needs 0 < 2*band < p"));
            }
        }
        match self.lambda {
            LambdaMode::Fixed { value } if !(value > 0.0) => {
                return bad("fixed lambda must be > 0".into());
            }
            LambdaMode::Calibrated {
                kappa: KappaSource::TrueEpsilon,
            } if self.s0 == 0 => {
                return bad("kappa from the true sparsity needs s0 > 0".into());
            }
            LambdaMode::Calibrated {
                kappa: KappaSource::EpsilonBar,
            } => {
                if let Err(e) = theory::default_kappa(self.n as f64 / self.p as f64) {
                    return bad(e.to_string());
                }
            }
            _ => {}
        }
        if !(self.covfree.phi0 > 0.0 && self.covfree.t > 0.0) {
            return bad("covfree.phi0 and covfree.t must be > 0".into());
        }
        if self.covfree.s0_bound == Some(0) {
            return bad("covfree.s0_bound must be >= 1".into());
        }
        if !(self.calibration_tol > 0.0) {
            return bad("calibration_tol must be > 0".into());
        }
        Ok(())
    }
}
