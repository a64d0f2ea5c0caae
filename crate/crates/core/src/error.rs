use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("time {t} outside horizon [{lo}, {hi}]")]
    Range { t: f64, lo: f64, hi: f64 },

    #[error("state diverged at t = {t} (last finite node t = {last_finite_t})")]
    Divergence { t: f64, last_finite_t: f64 },

    #[error("fixed-point iteration did not converge after {sweeps} sweeps (residual {residual:e})")]
    Iteration { sweeps: usize, residual: f64 },

    #[error("inversion failed: {0}")]
    Inversion(String),

    #[error("singular Jacobian at t = {t}")]
    Singular { t: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("certificate error: {0}")]
    Certificate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
