use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is singular or ill-conditioned (condition number {condition:e})")]
    Singular { condition: f64 },

    #[error("root equation has no sign change on (0, 1): l(0) = {at_zero}, l(1) = {at_one}")]
    NoBracket { at_zero: f64, at_one: f64 },

    #[error("root solver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("{what} must be {expected}, got {value}")]
    Domain { what: &'static str, expected: &'static str, value: f64 },

    #[error("temperature must be positive, got {0}")]
    InvalidGamma(f64),

    #[error("aggregated diffusion coefficient is negative ({0})")]
    InvalidVariance(f64),

    #[error("psi2 * psi2^T is not positive definite")]
    SingularPsi2,

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("episode {episode}, step {step}: {source}")]
    Step {
        episode: u64,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite parameter update")]
    NonFiniteUpdate,

    #[error("training aborted: {rejected} of {episodes} episodes rejected")]
    TooManyRejected { rejected: u64, episodes: u64 },

    #[error("batch is empty")]
    EmptyBatch,

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("row {row}: non-positive price {value}")]
    NonPositivePrice { row: usize, value: f64 },

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("results are not comparable: {0}")]
    MismatchedInputs(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite { context: context.into() }
    }
}

/// Rejects negative states.
pub(crate) fn check_state(y: f64) -> Result<()> {
    if y >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain { what: "state y", expected: "non-negative", value: y })
    }
}
