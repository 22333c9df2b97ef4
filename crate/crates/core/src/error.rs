use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution parameter: {0}")]
    Parameter(String),

    #[error("hyperexponential fit needs squared coefficient of variation > 1, got {scv}")]
    InfeasibleFit { scv: f64 },

    #[error("truncated gaussian with mu/sigma = {ratio} accepts too few draws (limit -4.75)")]
    RejectedConfiguration { ratio: f64 },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid policy: {0}")]
    Policy(String),

    #[error("invalid simulation config: {0}")]
    SimConfig(String),

    #[error("horizon too short: no send completed inside the measurement window")]
    InsufficientHorizon,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("coupling not applicable: {0}")]
    CouplingNotApplicable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
