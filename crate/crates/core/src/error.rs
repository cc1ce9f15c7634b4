use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bisection failed: {0}")]
    Bisection(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("action {action} does not belong to the {space} action space")]
    ActionSpace { action: u8, space: &'static str },
    #[error("linear program is infeasible (certificate bound {bound:.3e})")]
    Infeasible { bound: f64, certificate: Vec<f64> },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("unknown name: {0}")]
    UnknownName(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
