use thiserror::Error;

/// Errors produced by the psca library.
#[derive(Debug, Error)]
pub enum PscaError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (relative asymmetry {rel:.3e} exceeds {tol:.3e})")]
    NotSymmetric { rel: f64, tol: f64 },

    #[error("dense oracle guard exceeded: grid {k1}x{k2} with guard {guard}")]
    OracleGuard { k1: usize, k2: usize, guard: usize },

    #[error("invalid degree-of-separability {r}: must be in 1..={max}")]
    InvalidDegree { r: usize, max: usize },

    #[error("partial inner product annihilated the iterate (zero residual or orthogonal init)")]
    ZeroPip,

    #[error("empty observed set in missing pattern")]
    EmptyObservedSet,

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("component factor is not positive semi-definite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    #[error("preconditioner has a nonpositive eigenvalue ({value:.3e}); use the shifted kind")]
    PreconditionerSingular { value: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PscaError>;
