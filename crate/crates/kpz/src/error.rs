use thiserror::Error;

#[derive(Debug, Error)]
pub enum KpzError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("instability at step {step}: non-finite value at site {site}")]
    Unstable { step: usize, site: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("requested horizon {requested} exceeds available {available}")]
    Horizon { requested: f64, available: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("ill-conditioned fit (condition number {0:e})")]
    IllConditioned(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, KpzError>;
