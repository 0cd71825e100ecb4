use thiserror::Error;

/// Errors raised by the homogenization toolkit.
#[derive(Debug, Error)]
pub enum HomogError {
    #[error("coefficient field is not elliptic: smallest symmetric-part eigenvalue {lambda_low:.6e} <= 0")]
    NonElliptic { lambda_low: f64 },

    #[error("Krylov solver did not converge: {iterations} iterations, residual {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("bad smoothing parameter eps = {0}: must lie in (0, 1]")]
    BadEps(f64),

    #[error("eps = {eps} is incommensurate: {reason}")]
    IncommensurateEps { eps: f64, reason: String },

    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),

    #[error("corrector constants disagree between flux and raw formulas: max difference {difference:.3e} exceeds {bound:.3e}")]
    InternalInconsistency { difference: f64, bound: f64 },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid sweep configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, HomogError>;

impl From<serde_json::Error> for HomogError {
    fn from(e: serde_json::Error) -> Self {
        HomogError::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for HomogError {
    fn from(e: toml::de::Error) -> Self {
        HomogError::Parse(e.to_string())
    }
}
