use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("ellipticity violated at cell {cell}: {reason}")]
    NotElliptic { cell: usize, reason: String },

    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("operator is not positive definite (curvature {curvature:.3e} at iteration {iteration})")]
    Indefinite { iteration: usize, curvature: f64 },

    #[error("solver breakdown: {0}")]
    Breakdown(String),

    #[error("energy identity defect {defect:.3e} exceeds {limit:.3e}")]
    EnergyIdentity { defect: f64, limit: f64 },

    #[error("degenerate Green column")]
    DegenerateGreen,

    #[error("degenerate abscissa")]
    DegenerateAbscissa,

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("heterogeneous parameters: {0}")]
    Heterogeneous(String),

    #[error("inconsistent resume: {0}")]
    InconsistentResume(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
