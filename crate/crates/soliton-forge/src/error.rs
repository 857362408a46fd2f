use thiserror::Error;

/// Crate-wide error type. Variants name the violated precondition rather
/// than the call site, so callers can match on the geometric failure.
#[derive(Debug, Error)]
pub enum GeomError {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("almost contact structures need odd dimension, got {0}")]
    EvenDimension(usize),

    #[error("metric not positive definite at stencil point {0:?}")]
    DegenerateChart(Vec<f64>),

    #[error("metric is not bundle-like for the Reeb foliation (horizontal Lie-derivative residual {residual:.3e})")]
    NotBundleLike { residual: f64 },

    #[error("Reeb field is not Killing (residual {residual:.3e}); deformation curvature formulas need a one-dimensional Riemannian foliation")]
    NotKContact { residual: f64 },

    #[error("plane degenerates: |phi(X)| = {0:.3e}, X must be horizontal and non-null")]
    DegeneratePlane(f64),

    #[error("operator is not self-adjoint (residual {residual:.3e})")]
    NotSelfAdjoint { residual: f64 },

    #[error("invalid soliton problem: {0}")]
    InvalidProblem(String),

    #[error("profile empty: {0}")]
    EmptyProfile(String),

    #[error("tube degenerates: {0}")]
    DegenerateTube(String),

    #[error("numerical solver failed: {0}")]
    SolverFailure(String),

    #[error("unsupported input: {0}")]
    UnsupportedInput(String),

    #[error("tolerance inconsistency: {0}")]
    InconsistentTolerance(String),
}

pub type Result<T> = std::result::Result<T, GeomError>;
