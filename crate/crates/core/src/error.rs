use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("measure masses differ: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("oracle limited to {cap} atoms per measure, got {found}")]
    TooLarge { cap: usize, found: usize },

    #[error("negative weight {weight} produced at step {step} (dt * max rate must stay below 1)")]
    NegativeWeight { step: usize, weight: f64 },

    #[error("CFL violation at step {step} (t = {t}): courant number {courant} exceeds {limit}")]
    CflViolation {
        step: usize,
        t: f64,
        courant: f64,
        limit: f64,
    },

    #[error("positivity lost at step {step} (t = {t}): cell {cell} has density {value}")]
    PositivityLoss {
        step: usize,
        t: f64,
        cell: usize,
        value: f64,
    },

    #[error("initial data are not proportional (max defect {defect})")]
    H1Violation { defect: f64 },

    #[error("no recorded frame within half a step of t = {t}")]
    FrameMissing { t: f64 },

    #[error("micro and macro configurations disagree on {0}")]
    ConfigMismatch(String),

    #[error("rate changes by {delta} between measures at zero flat distance")]
    DegeneratePair { delta: f64 },

    #[error("invalid configuration `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },
}

impl Error {
    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical integration itself, as opposed to
    /// malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CflViolation { .. }
                | Error::PositivityLoss { .. }
                | Error::NegativeWeight { .. }
        )
    }
}
