use thiserror::Error;

use crate::hamiltonians::Frame;
use crate::hilbert::HalfInteger;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Fock cutoff n_max = {n_max} is too small; need at least {required}")]
    CutoffTooSmall { n_max: usize, required: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("operation requires integer J, got J = {0}")]
    NotInteger(HalfInteger),

    #[error("operation requires half-integer J, got J = {0}")]
    NotHalfInteger(HalfInteger),

    #[error("g^2/omega^2 = {ratio} is not within {tol:e} of a positive integer")]
    OffResonance { ratio: f64, tol: f64 },

    #[error("operator is not hermitian (max deviation {0:e})")]
    NonHermitian(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("time stepping did not converge: step {step:e}, amplitude change {deviation:e}")]
    StepTooLarge { step: f64, deviation: f64 },

    #[error("frame mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: Frame, found: Frame },

    #[error("norm drift {drift:e} exceeds tolerance {tol:e}")]
    NormDrift { drift: f64, tol: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
