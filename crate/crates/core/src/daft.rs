//! Discrete affine Fourier transform (DAFT).
//!
//! The forward transform of a length-`N` sequence is
//!
//! ```text
//! S[m] = 1/sqrt(N) * exp(-j2π c2 m²) * Σ_n exp(-j2π (m n / N + c1 n²)) s[n]
//! ```
//!
//! i.e. `S = A s` with `A = Λ(c2) F Λ(c1)`, where `F` is the unitary DFT and
//! `Λ(c) = diag(exp(-j2π c k²))`. Both transforms are computed as
//! chirp-multiply, FFT, chirp-multiply.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::{Fft, FftPlanner};

use crate::{check_len, CMatrix, Complex64, Error, Result};

/// Transform size and chirp rates. Only square (`M = N`) transforms exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaftParams {
    pub n: usize,
    pub c1: f64,
    pub c2: f64,
}

impl DaftParams {
    pub fn new(n: usize, c1: f64, c2: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("transform length must be at least 1".into()));
        }
        if !c1.is_finite() || !c2.is_finite() {
            return Err(Error::Config(format!("chirp rates must be finite (c1={c1}, c2={c2})")));
        }
        Ok(Self { n, c1, c2 })
    }

    /// `c1 = c2 = 0`: plain OFDM.
    pub fn ofdm(n: usize) -> Result<Self> {
        Self::new(n, 0.0, 0.0)
    }

    /// `c1 = c2 = 1/(2N)`: the discrete Fresnel transform used by OCDM.
    pub fn ocdm(n: usize) -> Result<Self> {
        let c = 1.0 / (2.0 * n as f64);
        Self::new(n, c, c)
    }
}

/// `exp(j2π turns)` with the argument reduced to one turn first.
#[inline]
pub(crate) fn cis_turns(turns: f64) -> Complex64 {
    let t = turns - turns.round();
    Complex64::from_polar(1.0, 2.0 * PI * t)
}

/// Diagonal of `Λ(c)`: `exp(-j2π c k²)` for `k = 0..n`.
pub fn chirp(c: f64, n: usize) -> Vec<Complex64> {
    (0..n).map(|k| cis_turns(-c * (k * k) as f64)).collect()
}

/// `Λ(c)` as a dense diagonal matrix.
pub fn chirp_diag(c: f64, n: usize) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_vec(chirp(c, n)))
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let plan: std::sync::Arc<dyn Fft<f64>> = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(buf.len())
        } else {
            p.plan_fft_forward(buf.len())
        }
    });
    plan.process(buf);
}

/// Forward DAFT.
pub fn daft(x: &[Complex64], p: &DaftParams) -> Result<Vec<Complex64>> {
    check_len(x.len(), p.n)?;
    let n = p.n;
    let scale = 1.0 / (n as f64).sqrt();
    let mut buf: Vec<Complex64> = x
        .iter()
        .enumerate()
        .map(|(k, &v)| v * cis_turns(-p.c1 * (k * k) as f64))
        .collect();
    fft_in_place(&mut buf, false);
    for (m, v) in buf.iter_mut().enumerate() {
        *v *= cis_turns(-p.c2 * (m * m) as f64) * scale;
    }
    Ok(buf)
}

/// Inverse DAFT: `s = A^H S`.
pub fn idaft(x: &[Complex64], p: &DaftParams) -> Result<Vec<Complex64>> {
    check_len(x.len(), p.n)?;
    let n = p.n;
    let scale = 1.0 / (n as f64).sqrt();
    let mut buf: Vec<Complex64> = x
        .iter()
        .enumerate()
        .map(|(m, &v)| v * cis_turns(p.c2 * (m * m) as f64))
        .collect();
    fft_in_place(&mut buf, true);
    for (k, v) in buf.iter_mut().enumerate() {
        *v *= cis_turns(p.c1 * (k * k) as f64) * scale;
    }
    Ok(buf)
}

/// The unitary DAFT matrix `A`, with
/// `A[m][n] = exp(-j2π(c2 m² + m n / N + c1 n²)) / sqrt(N)`.
pub fn daft_matrix(p: &DaftParams) -> CMatrix {
    let n = p.n;
    let scale = 1.0 / (n as f64).sqrt();
    // one phasor per factor: summing the phases first would cost about
    // 1e-11 turns for |c| ~ 1 at N = 256
    let row = chirp(p.c2, n);
    let col = chirp(p.c1, n);
    CMatrix::from_fn(n, n, |m, k| row[m] * cis_turns(-(((m * k) % n) as f64) / n as f64) * col[k] * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_point_is_identity() {
        let p = DaftParams::new(1, 0.37, -1.9).unwrap();
        let z = c(0.3, -2.0);
        assert_eq!(daft(&[z], &p).unwrap(), vec![z]);
        assert_eq!(idaft(&[z], &p).unwrap(), vec![z]);
    }

    #[test]
    fn impulse_inverse_is_flat() {
        let p = DaftParams::ofdm(4).unwrap();
        let mut x = vec![Complex64::new(0.0, 0.0); 4];
        x[0] = c(1.0, 0.0);
        for v in idaft(&x, &p).unwrap() {
            assert!((v - c(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn two_point_matrix() {
        let a = daft_matrix(&DaftParams::ofdm(2).unwrap());
        let h = 1.0 / 2f64.sqrt();
        let expect = [[h, h], [h, -h]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[(i, j)] - c(expect[i][j], 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn chirp_values() {
        let d = chirp_diag(0.25, 2);
        assert!((d[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((d[(1, 1)] - c(0.0, -1.0)).norm() < 1e-15);
        assert_eq!(d[(0, 1)], c(0.0, 0.0));
        assert_eq!(chirp_diag(0.0, 5), CMatrix::identity(5, 5));
        for v in chirp(0.123456789, 64) {
            assert!((v.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let p = DaftParams::new(8, 0.1, 0.2).unwrap();
        let err = daft(&[c(1.0, 0.0); 7], &p).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 8, actual: 7 }));
        assert!(idaft(&[c(1.0, 0.0); 9], &p).is_err());
    }

    #[test]
    fn invalid_params() {
        assert!(DaftParams::new(0, 0.0, 0.0).is_err());
        assert!(DaftParams::new(4, f64::NAN, 0.0).is_err());
        assert!(DaftParams::new(4, 0.0, f64::INFINITY).is_err());
    }
}
