use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("event ({r:?}, t={t}) outside scenario domain")]
    Domain { r: [f64; 3], t: f64 },
    #[error("configuration: {0}")]
    Config(String),
    #[error("invalid fluid sample: {0}")]
    InvalidSample(String),
    #[error("heat-capacity denominator vanishes at {r:?}")]
    Singular { r: [f64; 3] },
    #[error("kinetic pressure p1={p1} not positive at {r:?}")]
    Positivity { p1: f64, r: [f64; 3] },
    #[error("|grad p1_hat| below threshold at {r:?}; b undefined")]
    DegenerateGradient { r: [f64; 3] },
    #[error("initial condition is not a TTP: |n.b|={defect:e}")]
    InvalidInitialCondition { defect: f64 },
    #[error("p0 solver: {0}")]
    Solver(String),
    #[error("step rejected at t={t}: {reason}")]
    StepRejected { t: f64, reason: String },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("numerical check failed: {0}")]
    NumericalCheck(String),
    #[error("insufficient samples: need {need}, have {have}")]
    InsufficientSamples { need: usize, have: usize },
    #[error("sampling: {0}")]
    Sampling(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
