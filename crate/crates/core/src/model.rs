//! Problem instances: covariance models, Gaussian random designs, sparse
//! signals and noisy responses.
//!
//! Randomness comes from a ChaCha8 stream seeded with a 64-bit seed. Within
//! one instance the stream is consumed in a fixed order: the n×p standard
//! normal matrix in row-major order, then the support draw, then the n noise
//! entries. Replicate `r` of an experiment uses seed `base_seed + r`.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdlError};
use crate::linalg;

/// Covariance of the design rows.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceModel {
    Identity,
    /// Unit diagonal, `off` on the `band` nearest cyclic neighbours on each
    /// side, zero elsewhere.
    Circulant {
        band: usize,
        off: f64,
    },
    /// Explicit symmetric positive-definite matrix.
    Dense(DMatrix<f64>),
}

impl CovarianceModel {
    pub fn is_identity(&self) -> bool {
        matches!(self, CovarianceModel::Identity)
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self {
            CovarianceModel::Identity => "identity".into(),
            CovarianceModel::Circulant { band, off } => format!("circulant(band={band},off={off})"),
            CovarianceModel::Dense(m) => format!("dense({}x{})", m.nrows(), m.ncols()),
        }
    }
}

/// Dense realization of `model` at dimension `p`, validated symmetric and
/// positive definite.
pub fn build_covariance(model: &CovarianceModel, p: usize) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(SdlError::InvalidInput(
            "dimension p must be at least 1".into(),
        ));
    }
    let sigma = match model {
        CovarianceModel::Identity => return Ok(DMatrix::identity(p, p)),
        CovarianceModel::Circulant { band, off } => {
            if *band == 0 || 2 * band >= p {
                return Err(SdlError::InvalidCovariance(format!(
                    "circulant band {band} needs 0 < 2*band < p = {p}"
                )));
            }
            DMatrix::from_fn(p, p, |j, k| {
                let diff = j.abs_diff(k);
                let cyclic = diff.min(p - diff);
                if cyclic == 0 {
                    1.0
                } else if cyclic <= *band {
                    *off
                } else {
                    0.0
                }
            })
        }
        CovarianceModel::Dense(m) => {
            if m.nrows() != p || m.ncols() != p {
                return Err(SdlError::InvalidCovariance(format!(
                    "dense covariance is {}x{}, expected {p}x{p}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if linalg::asymmetry(m) > 1e-10 {
                return Err(SdlError::InvalidCovariance(
                    "matrix is not symmetric".into(),
                ));
            }
            m.clone()
        }
    };
    if sigma.clone().cholesky().is_none() {
        return Err(SdlError::InvalidCovariance(
            "matrix is not positive definite".into(),
        ));
    }
    Ok(sigma)
}

/// Sparse signal with `s0` entries equal to `mu` at uniformly random
/// positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub p: usize,
    pub s0: usize,
    pub mu: f64,
}

impl SignalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.s0 > self.p {
            return Err(SdlError::InvalidInput(format!(
                "sparsity s0 = {} exceeds p = {}",
                self.s0, self.p
            )));
        }
        if self.s0 > 0 && !(self.mu > 0.0) {
            return Err(SdlError::InvalidInput(
                "signal magnitude mu must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// One draw of the regression model `y = Xθ₀ + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub x: DMatrix<f64>,
    pub theta0: DVector<f64>,
    pub sigma: f64,
    pub w: DVector<f64>,
    pub y: DVector<f64>,
    pub seed: u64,
    /// Sorted indices of the nonzero entries of `theta0`.
    pub support: Vec<usize>,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Common magnitude of the active coefficients, if any.
    pub fn mu(&self) -> Option<f64> {
        self.support.first().map(|&i| self.theta0[i].abs())
    }

    pub fn active_mask(&self) -> Vec<bool> {
        self.theta0.iter().map(|v| *v != 0.0).collect()
    }
}

/// Asymptotic-scaling summary of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingParams {
    pub delta: f64,
    pub epsilon: f64,
    pub sigma0: f64,
    /// `μ√n/σ`; absent without signal or without noise.
    pub mu0: Option<f64>,
}

impl ScalingParams {
    pub fn from_dims(n: usize, p: usize, s0: usize, mu: Option<f64>, sigma: f64) -> Self {
        let nf = n as f64;
        Self {
            delta: nf / p as f64,
            epsilon: s0 as f64 / p as f64,
            sigma0: sigma / nf.sqrt(),
            mu0: match mu {
                Some(mu) if sigma > 0.0 => Some(mu * nf.sqrt() / sigma),
                _ => None,
            },
        }
    }
}

pub fn scaling_of(instance: &Instance) -> ScalingParams {
    ScalingParams::from_dims(
        instance.n(),
        instance.p(),
        instance.support.len(),
        instance.mu(),
        instance.sigma,
    )
}

/// Reusable sampler for one covariance configuration: the covariance and its
/// lower Cholesky factor are computed once and shared across replicates.
#[derive(Debug, Clone)]
pub struct DesignSampler {
    model: CovarianceModel,
    p: usize,
    covariance: DMatrix<f64>,
    factor: Option<DMatrix<f64>>,
}

impl DesignSampler {
    pub fn new(model: CovarianceModel, p: usize) -> Result<Self> {
        let covariance = build_covariance(&model, p)?;
        let factor = if model.is_identity() {
            None
        } else {
            let chol = covariance.clone().cholesky().ok_or_else(|| {
                SdlError::InvalidCovariance("matrix is not positive definite".into())
            })?;
            Some(chol.l())
        };
        Ok(Self {
            model,
            p,
            covariance,
            factor,
        })
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.model
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Exact inverse covariance, `None` for the identity model.
    pub fn precision(&self) -> Result<Option<DMatrix<f64>>> {
        if self.model.is_identity() {
            return Ok(None);
        }
        linalg::spd_inverse(&self.covariance)
            .map(Some)
            .map_err(|e| SdlError::InvalidCovariance(e.to_string()))
    }

    pub fn sample(&self, signal: &SignalSpec, n: usize, sigma: f64, seed: u64) -> Result<Instance> {
        if n == 0 {
            return Err(SdlError::InvalidInput("n must be at least 1".into()));
        }
        if !(sigma >= 0.0) {
            return Err(SdlError::InvalidInput("sigma must be >= 0".into()));
        }
        if signal.p != self.p {
            return Err(SdlError::InvalidInput(format!(
                "signal dimension {} does not match design dimension {}",
                signal.p, self.p
            )));
        }
        signal.validate()?;
        let p = self.p;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let z: Vec<f64> = (0..n * p)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let z = DMatrix::from_row_slice(n, p, &z);
        let x = match &self.factor {
            None => z,
            Some(l) => z * l.transpose(),
        };

        let mut support = index::sample(&mut rng, p, signal.s0).into_vec();
        support.sort_unstable();
        let mut theta0 = DVector::zeros(p);
        for &i in &support {
            theta0[i] = signal.mu;
        }

        let w = DVector::from_iterator(
            n,
            (0..n).map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * z
            }),
        );
        let y = &x * &theta0 + &w;
        Ok(Instance {
            x,
            theta0,
            sigma,
            w,
            y,
            seed,
            support,
        })
    }
}

/// One-shot convenience around [`DesignSampler`].
pub fn sample_instance(
    model: &CovarianceModel,
    signal: &SignalSpec,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<Instance> {
    DesignSampler::new(model.clone(), signal.p)?.sample(signal, n, sigma, seed)
}
