use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation is not defined for the requested field profile.
    #[error("unsupported profile: {0}")]
    UnsupportedProfile(String),

    /// The problem is too large for the requested exhaustive method.
    #[error("capacity exceeded: {what} requires N <= {max}, got N = {n}")]
    Capacity { what: &'static str, n: usize, max: usize },

    /// The step propagator failed to converge.
    #[error("integrator failure at t = {t}: {detail}")]
    Integrator { t: f64, detail: String },

    /// A numerical routine failed in a way that indicates a bug or a
    /// pathological input.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// An ensemble could not produce a result.
    #[error("ensemble error: {0}")]
    Ensemble(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
