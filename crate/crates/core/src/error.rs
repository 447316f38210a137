//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "matrix is not Hermitian: max |a_ij - conj(a_ji)| = {deviation:.3e} exceeds {tol:.1e}"
    )]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("invalid polarization p_z = {0}: must satisfy |p_z| <= 1")]
    InvalidPolarization(f64),

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("invalid protocol sequence: {0}")]
    InvalidSequence(String),

    #[error("noise trajectory covers {have:.6e} s but the sequence needs {need:.6e} s")]
    TimelineTooShort { have: f64, need: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("grid is not uniform: {0}")]
    NonUniformGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
