use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("ellipticity violated: q({x}, {t}) = {value} is below the floor {floor}")]
    Ellipticity { x: f64, t: f64, value: f64, floor: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is singular or not positive definite")]
    Singular,

    #[error("negative time step {0}")]
    NegativeStep(f64),

    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("Hurst parameter {0} outside the admissible interval (1/2, 1)")]
    Hurst(f64),

    #[error("kernels were built at t = {kernel}, step starts at t = {step}")]
    KernelTime { kernel: f64, step: f64 },

    #[error("coarsening factor {factor} does not divide {steps} steps")]
    Coarsening { factor: usize, steps: usize },

    #[error("grid mismatch: {0}")]
    Grid(String),

    #[error("rate fit needs at least two rows with positive errors: {0}")]
    RateFit(String),

    #[error("invalid parameter `{field}`: {message}")]
    Parameter { field: String, message: String },

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: &str, message: impl Into<String>) -> Self {
        Error::Parameter {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn config(path: &str, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
