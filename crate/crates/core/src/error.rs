use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NonSymmetricCovariance { asymmetry: f64 },
    #[error("covariance is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NonPositiveCovariance { min_eigenvalue: f64 },
    #[error("domain too small: Gaussian mass {mass:.3e} outside the {side} grid exceeds {limit:.1e}")]
    InsufficientDomain { side: &'static str, mass: f64, limit: f64 },
    #[error("bad grid: {0}")]
    BadGridSize(String),

    #[error("wrong representation: expected {expected}, found {found}")]
    WrongRepresentation { expected: &'static str, found: &'static str },
    #[error("representation mismatch between operands")]
    RepresentationMismatch,
    #[error("state is not normalized (norm² = {norm_sq})")]
    UnnormalizedState { norm_sq: f64 },
    #[error("space mismatch: {0}")]
    SpecMismatch(String),
    #[error("unknown subsystem `{0}`")]
    UnknownSubsystem(String),
    #[error("operator is not Hermitian (max |T - T†| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("trace {trace} deviates from one")]
    NotTraceOne { trace: f64 },
    #[error("operator is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("symbol degree {degree} exceeds the cap {cap}")]
    DegreeTooHigh { degree: usize, cap: usize },
    #[error("sampled symbol does not live on the target grid: {0}")]
    DomainOverflow(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("field is not normalized (integral {integral})")]
    NotNormalized { integral: f64 },
    #[error("reference density underflows ({count} points below floor with |W| > 1e-12)")]
    UnderflowRegion { count: usize },

    #[error("derivative order {order} exceeds the supported maximum {max}")]
    OrderOverflow { order: usize, max: usize },
    #[error("unstable step at t = {time}: mass changed by {drift:.3e}")]
    UnstableStep { time: f64, drift: f64 },
    #[error("mass {mass:.3e} reached the grid boundary at t = {time}")]
    BoundaryEscape { time: f64, mass: f64 },
    #[error("time step {dt} violates the stability guard {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("invalid run parameters: {0}")]
    InvalidRun(String),

    #[error("factor mismatch: {0}")]
    FactorMismatch(String),
    #[error("input operator `{0}` is not Hermitian")]
    NonHermitianInput(String),
    #[error("Hilbert space dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
