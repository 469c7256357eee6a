use thiserror::Error;

/// Errors produced by the analysis and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("exact mode unavailable: graph has {n} nodes, enumeration cap is {cap}")]
    ExactModeUnavailable { n: usize, cap: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid arrival spec: {0}")]
    InvalidArrivalSpec(String),

    #[error("rate vector is not strictly admissible (maximal slack {max_slack:.3e})")]
    Infeasible { max_slack: f64 },

    #[error("fixed-point iterate diverged: |r|_inf = {norm:.3e} exceeds {bound:.3e}")]
    Diverged { norm: f64, bound: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("conductance needs |I(G)| <= {cap}, got {size}")]
    TooManyStates { size: usize, cap: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("numeric failure at epoch {epoch}: {detail}")]
    Numeric { epoch: u64, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
