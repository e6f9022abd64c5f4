//! Link-level simulation of affine frequency division multiplexing (AFDM).
//!
//! The crate is organised bottom-up:
//!
//! - [`daft`]: the discrete affine Fourier transform and its unitary matrix.
//! - [`channel`]: linear time-varying (delay-Doppler) channels.
//! - [`effective`]: the DAFT-domain effective channel, parameter rules and
//!   band truncation.
//! - [`modem`]: constellations, frame layouts, modulation and the
//!   chirp-periodic prefix.
//! - [`detect`]: ML, LMMSE and the weighted MRC-based DFE detectors.
//! - [`estimate`]: embedded-pilot channel estimation.
//! - [`analysis`]: diversity (rank) analysis and pairwise error bounds.
//! - [`harness`]: Monte-Carlo experiments, configuration and CSV output.
//!
//! Shared numerics live in [`linalg`] (sparse column matrices and an envelope
//! Cholesky solver) and [`rng`] (reproducible per-trial random streams).

pub mod analysis;
pub mod channel;
pub mod daft;
pub mod detect;
pub mod effective;
pub mod estimate;
pub mod harness;
pub mod linalg;
pub mod modem;
pub mod rng;

pub use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<Complex64>;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(actual: usize, expected: usize) -> Result<()> {
    if actual == expected {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}

#[cfg(test)]
pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
