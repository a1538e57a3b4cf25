use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("index out of range: {0}")]
    IndexRange(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("solver did not converge: {0}")]
    NoConvergence(String),
    #[error("no spectral gap detected: {0}")]
    NoSpectralGap(String),
    #[error("insufficient samples: need at least {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },
    #[error("infeasible bound fit for {estimate_id}: worst sample {worst}")]
    InfeasibleFit { estimate_id: String, worst: String },
    #[error("memory guard: {0}")]
    MemoryGuard(String),
    #[error("quadrature tail estimate {tail:.3e} exceeds 1% of result magnitude {value:.3e}")]
    QuadratureTail { tail: f64, value: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
