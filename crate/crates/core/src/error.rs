use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("return {ret} is not allowed under transition state {state}")]
    SupportViolation { ret: i64, state: u8 },

    #[error("chain is reducible or its stationary system is singular (residual {residual:e})")]
    Reducible { residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("analytic chain for order p = {p} exceeds the cap p <= {cap}")]
    ChainTooLarge { p: usize, cap: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
