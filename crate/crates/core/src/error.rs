use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("index out of range: {what} = {index} (size {size})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("domain error: {0}")]
    Domain(String),
    /// The occupancy/evaluation linear system could not be solved to tolerance.
    /// Cannot happen for discount < 1; reported as an internal error.
    #[error("internal solver error: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
