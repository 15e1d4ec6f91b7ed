use thiserror::Error;

/// Errors raised by the simulation laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} is below -{tolerance:e}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite {what} at point {point:?}")]
    Evaluation { what: String, point: Vec<f64> },

    #[error("state became non-finite at t = {time}")]
    BlowUp { time: f64 },

    #[error("step size {dt} exceeds the stability bound {bound} = 1/(4 * stiffness)")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("degenerate direction: the two states coincide")]
    DegenerateDirection,

    #[error("coupling degeneracy at x = {x:?}, y = {y:?}: {reason}")]
    CouplingDegeneracy { x: Vec<f64>, y: Vec<f64>, reason: String },

    #[error("diffusion matrix is numerically singular at {point:?} (condition estimate {condition:e})")]
    Nondegeneracy { point: Vec<f64>, condition: f64 },

    #[error("insufficient signal: {usable} usable points above the noise floor, at least 4 required")]
    InsufficientSignal { usable: usize },

    #[error("invalid configuration:\n{}", format_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One problem found while validating an experiment configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConfigIssue {
    /// Dotted field path, e.g. `run.dt`.
    pub field: String,
    /// 1-based line in the source text, when the field appears there.
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: `{}`: {}", self.field, self.message),
            None => write!(f, "`{}`: {}", self.field, self.message),
        }
    }
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
