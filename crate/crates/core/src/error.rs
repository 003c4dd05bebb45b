use num_complex::Complex64;
use thiserror::Error;

/// Error type shared by every solver and analysis routine in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The 2x2 mode Hamiltonian has (numerically) zero gap, so no unique
    /// ground state exists.
    #[error("degenerate Hamiltonian at k = {k}, h = {h}: gap = {gap:.3e}")]
    DegenerateHamiltonian { k: f64, h: f64, gap: f64 },

    #[error("out of domain: {0}")]
    OutOfDomain(String),

    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    /// Special-function evaluation blew up; carries the order and argument
    /// so the failing parameter region is visible to the caller.
    #[error("special function failure for order {omega}, argument {z}: {reason}")]
    SpecialFunction {
        omega: Complex64,
        z: Complex64,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
