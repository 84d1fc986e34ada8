use thiserror::Error;

/// Errors raised by the identification pipeline.
#[derive(Debug, Error)]
pub enum SysIdError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("system is not stable: spectral radius {0} >= 1")]
    Unstable(f64),

    #[error("covariance `{name}` is not symmetric positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { name: &'static str, min_eig: f64 },

    #[error("could not rescale A to the requested spectral radius after {0} draws")]
    RescaleFailed(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ill-conditioned fit: sigma_min(U^T U) = {sigma_min:e} below {threshold:e} (T = {t})")]
    IllConditioned {
        sigma_min: f64,
        threshold: f64,
        t: usize,
    },

    #[error("order-deficient Hankel: sigma_{order}(H-) = {sigma:e} (sigma_1 = {sigma_max:e})")]
    OrderDeficient {
        order: usize,
        sigma: f64,
        sigma_max: f64,
    },

    #[error("{0} failed to converge")]
    NoConvergence(&'static str),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("experiment cell (system {system}, T = {t}) failed: {source}")]
    Cell {
        system: usize,
        t: usize,
        #[source]
        source: Box<SysIdError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SysIdError {
    /// True for failures of the numerical pipeline, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            SysIdError::Unstable(_)
            | SysIdError::NotPsd { .. }
            | SysIdError::RescaleFailed(_)
            | SysIdError::IllConditioned { .. }
            | SysIdError::OrderDeficient { .. }
            | SysIdError::NoConvergence(_) => true,
            SysIdError::Cell { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, SysIdError>;
