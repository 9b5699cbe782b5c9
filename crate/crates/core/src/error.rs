use alloc::string::String;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("non-finite or out-of-domain value {value} of `{what}` at node {node} (x = {x})")]
    Domain { what: String, node: usize, x: f64, value: f64 },

    #[error("degenerate chart: {0}")]
    DegenerateChart(String),

    #[error("degenerate mixture family: smallest metric eigenvalue {min_eigenvalue:e} below {threshold:e}")]
    DegenerateFamily { min_eigenvalue: f64, threshold: f64 },

    #[error("likelihood starves basis component {component}: integral {integral:e}")]
    Starvation { component: usize, integral: f64 },

    #[error("degenerate update: {0}")]
    DegenerateUpdate(String),

    #[error("coordinates left the simplex at index {index} (value {value:e})")]
    ManifoldExit { index: usize, value: f64 },

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("path exploded at step {step}: |x| = {value:e}")]
    Explosion { step: usize, value: f64 },

    #[error("particle weights collapsed at step {step}")]
    WeightCollapse { step: usize },

    #[error("explicit scheme unstable: a*dt/dx^2 = {ratio} > {limit}")]
    Cfl { ratio: f64, limit: f64 },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// True for errors caused by malformed input rather than a numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Cfl { .. } | Error::Capability(_))
    }
}

pub type Result<T> = core::result::Result<T, Error>;
