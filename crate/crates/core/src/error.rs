use thiserror::Error;

/// Errors raised by the solvers, the verifier and the simulation engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the domain of an operation.
    #[error("domain error: {what} = {value}")]
    Domain { what: &'static str, value: f64 },

    /// A model or discount parameter violates its invariant.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("function returned non-finite value {fx} at x = {x}")]
    NonFinite { x: f64, fx: f64 },

    /// The parameters fall in a region where no closed-form equilibrium is available.
    #[error("unsupported parameter region: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Operation requires the interior-barrier case.
    #[error("operation requires a barrier solution (b > 0)")]
    NotBarrierCase,

    /// Operation needs an analytic discount tail that the spec does not carry.
    #[error("discount has no analytic tail: {0}")]
    NoAnalyticTail(&'static str),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
