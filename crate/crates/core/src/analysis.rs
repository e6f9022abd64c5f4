//! Diversity analysis: `Φ(δ) = [H_1 δ | … | H_P δ]` built from unit-gain
//! path matrices, its minimum rank over difference vectors, and the
//! pairwise-error-probability bound `∏ 1 / (1 + λ² / (4 P N₀))`.

use rand::Rng;

use crate::channel::LtvChannel;
use crate::daft::DaftParams;
use crate::effective::PathResponse;
use crate::modem::Alphabet;
use crate::rng::stream_rng;
use crate::{check_len, CMatrix, Complex64, Error, Result};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Non-zero difference `x_m - x_n` of two frames.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceVector {
    pub delta: Vec<Complex64>,
}

impl DifferenceVector {
    pub fn new(delta: Vec<Complex64>) -> Result<Self> {
        if delta.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
            return Err(Error::Config("difference vector must be non-zero".into()));
        }
        Ok(Self { delta })
    }
}

/// Distinct values of `a - b` for `a, b` in the alphabet, zero first.
pub fn difference_alphabet(a: &Alphabet) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0)];
    for p in &a.points {
        for q in &a.points {
            let d = p - q;
            if !out.iter().any(|z| (z - d).norm() < 1e-12) {
                out.push(d);
            }
        }
    }
    out
}

/// Unit-gain path matrices `H_i`, reused across many `δ`.
#[derive(Debug, Clone)]
pub struct PhiBuilder {
    paths: Vec<CMatrix>,
    n: usize,
}

impl PhiBuilder {
    pub fn new(ch: &LtvChannel, p: &DaftParams) -> Result<Self> {
        check_len(ch.n, p.n)?;
        let paths = ch.paths.iter().map(|path| PathResponse::new(path.delay, path.doppler, p).dense()).collect();
        Ok(Self { paths, n: p.n })
    }

    pub fn phi(&self, delta: &[Complex64]) -> Result<CMatrix> {
        check_len(delta.len(), self.n)?;
        let d = nalgebra::DVector::from_column_slice(delta);
        let mut m = CMatrix::zeros(self.n, self.paths.len());
        for (i, h) in self.paths.iter().enumerate() {
            m.set_column(i, &(h * &d));
        }
        Ok(m)
    }
}

pub fn phi_matrix(delta: &DifferenceVector, ch: &LtvChannel, p: &DaftParams) -> Result<CMatrix> {
    PhiBuilder::new(ch, p)?.phi(&delta.delta)
}

/// Number of singular values above `RANK_TOLERANCE · σ_max`.
pub fn numerical_rank(m: &CMatrix) -> usize {
    let sv = m.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * smax).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSearch {
    pub min_rank: usize,
    /// A difference vector attaining `min_rank`.
    pub witness: Vec<Complex64>,
    pub exhaustive: bool,
    pub evaluated: u64,
}

/// Minimum rank of `Φ(δ)` over non-zero difference vectors. All
/// `|𝔸 - 𝔸|^N - 1` vectors are enumerated when that fits in `budget`;
/// otherwise `budget` vectors are drawn at random from stream `seed`.
pub fn min_rank_over_deltas(ch: &LtvChannel, p: &DaftParams, a: &Alphabet, budget: u64, seed: u64) -> Result<RankSearch> {
    let builder = PhiBuilder::new(ch, p)?;
    let diffs = difference_alphabet(a);
    let n = p.n;
    let total = (diffs.len() as u128).checked_pow(n as u32).map(|t| t - 1);
    let mut best: Option<(usize, Vec<Complex64>)> = None;
    let mut consider = |delta: Vec<Complex64>| -> Result<()> {
        let r = numerical_rank(&builder.phi(&delta)?);
        if best.as_ref().is_none_or(|b| r < b.0) {
            best = Some((r, delta));
        }
        Ok(())
    };
    let (exhaustive, evaluated) = match total {
        Some(t) if t <= budget as u128 => {
            let mut digits = vec![0usize; n];
            for _ in 0..t {
                // mixed-radix increment, skipping the all-zero vector
                for d in digits.iter_mut() {
                    *d += 1;
                    if *d < diffs.len() {
                        break;
                    }
                    *d = 0;
                }
                consider(digits.iter().map(|&d| diffs[d]).collect())?;
            }
            (true, t as u64)
        }
        _ => {
            let mut rng = stream_rng(seed, 0);
            let mut count = 0;
            while count < budget {
                let delta: Vec<Complex64> = (0..n).map(|_| diffs[rng.random_range(0..diffs.len())]).collect();
                if delta.iter().all(|z| z.norm() == 0.0) {
                    continue;
                }
                consider(delta)?;
                count += 1;
            }
            (false, budget)
        }
    };
    let (min_rank, witness) = best.ok_or_else(|| Error::InsufficientData("no difference vector evaluated".into()))?;
    Ok(RankSearch { min_rank, witness, exhaustive, evaluated })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PepBound {
    /// `∏ 1 / (1 + λ² / (4 P N₀))`.
    pub bound: f64,
    /// High-SNR form `1 / (N₀^{-r} ∏ λ² / (4P))` over the `r` non-zero `λ`.
    pub high_snr: f64,
    pub rank: usize,
}

pub fn pep_bound(delta: &DifferenceVector, ch: &LtvChannel, p: &DaftParams, n0: f64) -> Result<PepBound> {
    if !(n0 > 0.0) {
        return Err(Error::Config(format!("noise power must be positive, got {n0}")));
    }
    let phi = phi_matrix(delta, ch, p)?;
    let paths = ch.paths.len() as f64;
    let sv = phi.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let mut bound = 1.0;
    let mut high_snr = 1.0;
    let mut rank = 0;
    for &s in sv.iter() {
        let g = s * s / (4.0 * paths * n0);
        bound /= 1.0 + g;
        if s > RANK_TOLERANCE * smax {
            high_snr /= g;
            rank += 1;
        }
    }
    Ok(PepBound { bound, high_snr, rank })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelPath;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_path(n: usize) -> (LtvChannel, DaftParams) {
        let ch = LtvChannel::new(
            vec![ChannelPath::new(c(1.0, 0.0), 0, 1.0), ChannelPath::new(c(1.0, 0.0), 1, -1.0)],
            n,
        )
        .unwrap();
        (ch, DaftParams::new(n, 3.0 / (2.0 * n as f64), 1.0 / (2.0 * n as f64 * std::f64::consts::PI)).unwrap())
    }

    #[test]
    fn difference_alphabets() {
        assert_eq!(difference_alphabet(&Alphabet::bpsk()).len(), 3);
        assert_eq!(difference_alphabet(&Alphabet::qpsk()).len(), 9);
        assert_eq!(difference_alphabet(&Alphabet::qam16()).len(), 49);
    }

    #[test]
    fn phi_columns_and_linearity() {
        let (ch, p) = two_path(8);
        let mut e0 = vec![c(0.0, 0.0); 8];
        e0[0] = c(1.0, 0.0);
        let d = DifferenceVector::new(e0.clone()).unwrap();
        let phi = phi_matrix(&d, &ch, &p).unwrap();
        for (i, path) in ch.paths.iter().enumerate() {
            let h = PathResponse::new(path.delay, path.doppler, &p).dense();
            for r in 0..8 {
                assert!((phi[(r, i)] - h[(r, 0)]).norm() < 1e-14);
            }
        }
        let d2 = DifferenceVector::new(e0.iter().map(|z| z * 2.0).collect()).unwrap();
        let phi2 = phi_matrix(&d2, &ch, &p).unwrap();
        assert!(crate::max_abs(&(phi2 - phi * c(2.0, 0.0))) < 1e-14);
        assert!(DifferenceVector::new(vec![c(0.0, 0.0); 3]).is_err());
    }

    #[test]
    fn single_path_rank_one() {
        let ch = LtvChannel::new(vec![ChannelPath::new(c(1.0, 0.0), 1, 1.0)], 4).unwrap();
        let p = DaftParams::new(4, 3.0 / 8.0, 0.04).unwrap();
        let r = min_rank_over_deltas(&ch, &p, &Alphabet::bpsk(), 1 << 20, 0).unwrap();
        assert!(r.exhaustive);
        assert_eq!(r.evaluated, 80);
        assert_eq!(r.min_rank, 1);
    }

    #[test]
    fn pep_limits() {
        let ch = LtvChannel::new(vec![ChannelPath::new(c(1.0, 0.0), 0, 0.0)], 4).unwrap();
        let p = DaftParams::new(4, 0.1, 0.02).unwrap();
        let d = DifferenceVector::new(vec![c(2.0, 0.0), c(0.0, 0.0), c(-2.0, 0.0), c(0.0, 0.0)]).unwrap();
        let b = pep_bound(&d, &ch, &p, 1e12).unwrap();
        assert!((b.bound - 1.0).abs() < 1e-9);
        let b = pep_bound(&d, &ch, &p, 0.5).unwrap();
        assert!((b.bound - 1.0 / (1.0 + 8.0 / 2.0)).abs() < 1e-12);
        assert_eq!(b.rank, 1);
        let (ch2, p2) = two_path(8);
        let d2 = DifferenceVector::new((0..8).map(|k| c(if k % 3 == 0 { 2.0 } else { 0.0 }, 0.0)).collect()).unwrap();
        let mut last = 1.0;
        for snr_db in (0..40).step_by(5) {
            let b = pep_bound(&d2, &ch2, &p2, 10f64.powf(-snr_db as f64 / 10.0)).unwrap();
            assert!(b.bound < last);
            last = b.bound;
        }
    }
}
