use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    Kernel(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("need N >= {need} particles, got {got}")]
    TooFewParticles { need: usize, got: usize },

    #[error("transport problem with {points} support points exceeds the exact-solver budget of {budget}; subsample the measures first")]
    SolverBudget { points: usize, budget: usize },

    #[error("moment constraint violated: {moment} differs by {gap:e}")]
    MomentConstraint { moment: String, gap: f64 },

    #[error("sobolev exponent s={s} outside admissible window ({lo}, {hi})")]
    SobolevWindow { s: f64, lo: f64, hi: f64 },

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
