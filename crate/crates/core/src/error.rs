use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite sample in {0}")]
    NonFinite(&'static str),
    #[error("datum carries mass on the joint zero mode")]
    ZeroModeMass,
    #[error("not in H^-theta: nonzero coefficient on a zero-weight mode")]
    NotInHTheta,
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("coefficients are not elliptic (lambda = {0})")]
    NotElliptic(f64),
    #[error("coercivity certificate failed: min ratio {min_ratio} < {threshold}")]
    CertificateFailed { min_ratio: f64, threshold: f64 },
    #[error("truncation cannot certify the decomposition: {0}")]
    TruncationInsufficient(String),
    #[error("invalid times: {0}")]
    InvalidTimes(String),
    #[error("rejected geometry: {0}")]
    Geometry(String),
    #[error("configuration is not causal: {0}")]
    NonCausal(String),
    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
