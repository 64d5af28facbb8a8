use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("task distribution is empty")]
    EmptyDistribution,

    #[error("cannot orthogonalize {n_task} task vectors in {n_dim} dimensions")]
    InfeasibleOrthogonalization { n_task: usize, n_dim: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite gradient at index {index} (value {value})")]
    NumericFault { index: usize, value: f64 },

    #[error("step {step}: {inner}")]
    AtStep { step: usize, inner: Box<Error> },

    #[error("degenerate system: resource denominator {denominator} at t = {time}")]
    Degenerate { time: f64, denominator: f64 },

    #[error("step size underflow at t = {time} (h = {step_size:e})")]
    Stiffness { time: f64, step_size: f64 },

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("dependency graph has a cycle through task {0}")]
    CyclicGates(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            inner: Box::new(self),
        }
    }
}
