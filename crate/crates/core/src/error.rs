use thiserror::Error;

/// Errors raised by the control library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{what} index {index} out of range (valid: {valid})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        valid: String,
    },
    #[error("invalid box set: {0}")]
    InvalidBox(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The tuning parameters cannot produce a valid weight vector or certificate.
    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),
    #[error("empty grid: {0}")]
    EmptyGrid(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("state outside the state box: {0}")]
    StateOutOfBox(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
