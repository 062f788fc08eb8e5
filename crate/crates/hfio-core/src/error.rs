use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

/// Failure modes shared by every module.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported dimension {0} (supported: 1, 2)")]
    UnsupportedDimension(usize),
    #[error("non-finite value encountered at {point:?}")]
    EvaluationFailure { point: Vec<f64> },
    #[error("Newton iteration did not converge after {iterations} steps (last iterate {last:?})")]
    SolverFailure { last: Vec<f64>, iterations: usize },
    #[error("singular Jacobian at {point:?}")]
    JacobianSingular { point: Vec<f64> },
    #[error("separation inequality violated at {witness:?}")]
    LemmaViolated { witness: Vec<f64> },
    #[error("matrix of {entries} entries exceeds the cap of {cap}")]
    TooLarge { entries: usize, cap: usize },
    #[error("singular value decomposition failed")]
    DecompositionFailure,
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("at h = {h}: {source}")]
    AtH { h: f64, source: Box<Error> },
}

impl Error {
    pub fn at_h(self, h: f64) -> Self {
        Error::AtH { h, source: Box::new(self) }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
