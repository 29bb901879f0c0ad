use thiserror::Error;

/// Errors produced by the analytic and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature failed to converge (estimate {estimate:.6e}, error {error:.3e})")]
    QuadratureFailure { estimate: f64, error: f64 },

    #[error("fourier inversion did not converge before omega cap (estimate {estimate:.6e}, change {change:.3e})")]
    TruncationNonconvergence { estimate: f64, change: f64 },

    #[error("{term}: {source}")]
    Term {
        term: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("fit failed: mean absolute error {mae:.4e} at n_eff = {n_eff:.3} exceeds tolerance {tolerance:.4e}")]
    FitFailure { n_eff: f64, mae: f64, tolerance: f64 },
}

impl Error {
    pub(crate) fn in_term(self, term: &'static str) -> Self {
        Error::Term {
            term,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
