use thiserror::Error;

pub type Result<T> = std::result::Result<T, SdlError>;

#[derive(Debug, Error)]
pub enum SdlError {
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("invalid precision matrix: {0}")]
    InvalidPrecision(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("lasso did not converge after {iterations} sweeps (kkt gap {kkt_gap:e})")]
    NonConvergence { iterations: usize, kkt_gap: f64 },

    #[error(
        "lambda calibration failed: lambda*d - kappa*tau = {f_hi:e} at lambda = {lambda_hi:e}, \
         {f_lo:e} at lambda = {lambda_lo:e}"
    )]
    CalibrationFailure {
        lambda_hi: f64,
        f_hi: f64,
        lambda_lo: f64,
        f_lo: f64,
    },

    #[error("degenerate support: support size {support_size} is not below n = {n}")]
    DegenerateSupport { support_size: usize, n: usize },

    #[error("residual vector is identically zero; noise scale undefined")]
    ZeroScale,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no fixed point: {0}")]
    NoFixedPoint(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("degenerate spread in covariance thresholding (sigma2 = 0)")]
    DegenerateSpread,

    #[error("all {0} replicates failed")]
    AllReplicatesFailed(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl SdlError {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            SdlError::Config(_) | SdlError::InvalidInput(_) | SdlError::Io(_)
        )
    }
}
