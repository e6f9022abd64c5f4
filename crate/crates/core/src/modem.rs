//! Symbol mapping, frame layouts, DAFT-domain modulation and the
//! chirp-periodic prefix.
//!
//! Bits map to constellation points with Gray labelling: BPSK `0 → +1`,
//! `1 → -1`; QPSK maps each bit to one quadrature rail; 16-QAM maps each bit
//! pair to a rail level with `00 → -3, 01 → -1, 11 → +1, 10 → +3`. All
//! constellations have unit average energy.

use serde::{Deserialize, Serialize};

use crate::daft::{cis_turns, daft, idaft, DaftParams};
use crate::{check_len, Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphabetKind {
    Bpsk,
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    pub kind: AlphabetKind,
    /// Point `i` carries the bit label of `i` written MSB first.
    pub points: Vec<Complex64>,
    pub bits_per_symbol: usize,
}

fn gray_level(b_hi: usize, b_lo: usize) -> f64 {
    match (b_hi, b_lo) {
        (0, 0) => -3.0,
        (0, 1) => -1.0,
        (1, 1) => 1.0,
        _ => 3.0,
    }
}

impl Alphabet {
    pub fn new(kind: AlphabetKind) -> Self {
        let points: Vec<Complex64> = match kind {
            AlphabetKind::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            AlphabetKind::Qpsk => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                (0..4)
                    .map(|i| {
                        let re = 1.0 - 2.0 * ((i >> 1) & 1) as f64;
                        let im = 1.0 - 2.0 * (i & 1) as f64;
                        Complex64::new(re * s, im * s)
                    })
                    .collect()
            }
            AlphabetKind::Qam16 => {
                let s = 1.0 / 10f64.sqrt();
                (0..16)
                    .map(|i| {
                        let re = gray_level((i >> 3) & 1, (i >> 2) & 1);
                        let im = gray_level((i >> 1) & 1, i & 1);
                        Complex64::new(re * s, im * s)
                    })
                    .collect()
            }
        };
        let bits_per_symbol = points.len().trailing_zeros() as usize;
        Self { kind, points, bits_per_symbol }
    }

    pub fn bpsk() -> Self {
        Self::new(AlphabetKind::Bpsk)
    }

    pub fn qpsk() -> Self {
        Self::new(AlphabetKind::Qpsk)
    }

    pub fn qam16() -> Self {
        Self::new(AlphabetKind::Qam16)
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// Index of the point nearest to `z`; ties go to the lower index.
    pub fn nearest(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn slice(&self, z: Complex64) -> Complex64 {
        self.points[self.nearest(z)]
    }
}

/// Gray-map a bit sequence (one bit per `u8`, values 0 or 1).
pub fn map_bits(bits: &[u8], a: &Alphabet) -> Result<Vec<Complex64>> {
    let k = a.bits_per_symbol;
    if bits.len() % k != 0 {
        return Err(Error::Dimension { expected: bits.len().div_ceil(k) * k, actual: bits.len() });
    }
    Ok(bits
        .chunks(k)
        .map(|c| {
            let idx = c.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
            a.points[idx]
        })
        .collect())
}

/// Hard-decision minimum-distance demapping.
pub fn demap_bits(symbols: &[Complex64], a: &Alphabet) -> Vec<u8> {
    let k = a.bits_per_symbol;
    let mut out = Vec::with_capacity(symbols.len() * k);
    for &z in symbols {
        let idx = a.nearest(z);
        out.extend((0..k).rev().map(|b| ((idx >> b) & 1) as u8));
    }
    out
}

/// Placement of data, pilot and null symbols in a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayoutKind {
    /// Every position carries data.
    DataOnly,
    /// `q` nulls, `lead` of them before the data block and the rest after it.
    ZeroPadded { q: usize, lead: usize },
    /// Pilot at 0, nulls at `1..=q` and `N - q..N`, data in between.
    EmbeddedPilot { q: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLayout {
    pub n: usize,
    pub kind: LayoutKind,
}

impl FrameLayout {
    pub fn data_only(n: usize) -> Self {
        Self { n, kind: LayoutKind::DataOnly }
    }

    /// Zero-padded frame whose data block starts `spread` positions before
    /// the end of the `q`-null guard, so a band spanning Doppler offsets
    /// `-spread..` never leaves the frame. Data occupy
    /// `q - spread ..= N - spread - 1`.
    pub fn zero_padded(n: usize, q: usize, spread: usize) -> Result<Self> {
        if q >= n || spread > q {
            return Err(Error::Config(format!("zero-padded layout needs spread <= q < n (n={n}, q={q}, spread={spread})")));
        }
        Ok(Self { n, kind: LayoutKind::ZeroPadded { q, lead: q - spread } })
    }

    pub fn embedded_pilot(n: usize, q: usize) -> Result<Self> {
        if 2 * q + 1 >= n {
            return Err(Error::Config(format!("embedded-pilot layout needs 2q + 1 < n (n={n}, q={q})")));
        }
        Ok(Self { n, kind: LayoutKind::EmbeddedPilot { q } })
    }

    pub fn guard_count(&self) -> usize {
        match self.kind {
            LayoutKind::DataOnly => 0,
            LayoutKind::ZeroPadded { q, .. } | LayoutKind::EmbeddedPilot { q } => q,
        }
    }

    pub fn pilot_index(&self) -> Option<usize> {
        matches!(self.kind, LayoutKind::EmbeddedPilot { .. }).then_some(0)
    }

    /// `N_Q = N - Q - 1`, the last data index of an embedded-pilot frame.
    pub fn n_q(&self) -> usize {
        self.n - self.guard_count() - 1
    }

    pub fn data_indices(&self) -> Vec<usize> {
        match self.kind {
            LayoutKind::DataOnly => (0..self.n).collect(),
            LayoutKind::ZeroPadded { q, lead } => (lead..lead + self.n - q).collect(),
            LayoutKind::EmbeddedPilot { q } => (q + 1..self.n - q).collect(),
        }
    }

    pub fn data_len(&self) -> usize {
        match self.kind {
            LayoutKind::DataOnly => self.n,
            LayoutKind::ZeroPadded { q, .. } => self.n - q,
            LayoutKind::EmbeddedPilot { q } => self.n - 2 * q - 1,
        }
    }
}

/// Assemble a DAFT-domain frame. `pilot` is ignored by layouts without one.
pub fn build_frame(data: &[Complex64], layout: &FrameLayout, pilot: Complex64) -> Result<Vec<Complex64>> {
    check_len(data.len(), layout.data_len())?;
    let mut x = vec![Complex64::new(0.0, 0.0); layout.n];
    for (&i, &d) in layout.data_indices().iter().zip(data) {
        x[i] = d;
    }
    if let Some(i) = layout.pilot_index() {
        x[i] = pilot;
    }
    Ok(x)
}

/// `s = A^H x`.
pub fn modulate(x: &[Complex64], p: &DaftParams) -> Result<Vec<Complex64>> {
    idaft(x, p)
}

/// `y = A r`.
pub fn demodulate(r: &[Complex64], p: &DaftParams) -> Result<Vec<Complex64>> {
    daft(r, p)
}

/// Prepend `l_cp` samples `s[n] = s[N + n] exp(-j2π c1 (N² + 2 N n))`,
/// `n = -l_cp..-1`.
pub fn add_cpp(s: &[Complex64], l_cp: usize, c1: f64) -> Result<Vec<Complex64>> {
    let n = s.len();
    if l_cp > 0 && l_cp >= n {
        return Err(Error::Config(format!("prefix length {l_cp} must be below the frame length {n}")));
    }
    let nf = n as f64;
    let mut out = Vec::with_capacity(n + l_cp);
    for k in (1..=l_cp).rev() {
        let idx = -(k as f64);
        out.push(s[n - k] * cis_turns(-c1 * (nf * nf + 2.0 * nf * idx)));
    }
    out.extend_from_slice(s);
    Ok(out)
}

/// Drop the first `l_cp` samples.
pub fn strip_cpp(r: &[Complex64], l_cp: usize) -> Result<Vec<Complex64>> {
    if l_cp > r.len() {
        return Err(Error::Dimension { expected: l_cp, actual: r.len() });
    }
    Ok(r[l_cp..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn unit_energy_and_gray_adjacency() {
        for a in [Alphabet::bpsk(), Alphabet::qpsk(), Alphabet::qam16()] {
            let e = a.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / a.size() as f64;
            assert!((e - 1.0).abs() < 1e-15, "{:?}", a.kind);
            // nearest neighbours differ in exactly one bit
            let dmin = a
                .points
                .iter()
                .enumerate()
                .flat_map(|(i, p)| a.points.iter().skip(i + 1).map(move |q| (p - q).norm()))
                .fold(f64::INFINITY, f64::min);
            for i in 0..a.size() {
                for j in 0..a.size() {
                    if i != j && ((a.points[i] - a.points[j]).norm() - dmin).abs() < 1e-12 {
                        assert_eq!((i ^ j).count_ones(), 1, "{:?} {i} {j}", a.kind);
                    }
                }
            }
        }
    }

    #[test]
    fn bit_mapping() {
        let b = Alphabet::bpsk();
        assert_eq!(map_bits(&[0, 1], &b).unwrap(), vec![c(1.0, 0.0), c(-1.0, 0.0)]);
        let q = Alphabet::qpsk();
        let s = map_bits(&[1, 0], &q).unwrap();
        assert_eq!(demap_bits(&s, &q), vec![1, 0]);
        assert!(matches!(map_bits(&[0, 1, 1], &q), Err(Error::Dimension { .. })));
        let m = Alphabet::qam16();
        let bits: Vec<u8> = (0..64).map(|i| ((i * 7 + 3) % 5 % 2) as u8).collect();
        assert_eq!(demap_bits(&map_bits(&bits, &m).unwrap(), &m), bits);
        assert_eq!(map_bits(&[0, 0, 1, 0], &m).unwrap()[0], c(-3.0, 3.0) / 10f64.sqrt());
    }

    #[test]
    fn layouts() {
        let l = FrameLayout::embedded_pilot(16, 4).unwrap();
        assert_eq!(l.data_indices(), (5..=11).collect::<Vec<_>>());
        assert_eq!(l.n_q(), 11);
        let x = build_frame(&[c(1.0, 0.0); 7], &l, c(3.0, 0.0)).unwrap();
        for i in [1, 2, 3, 4, 12, 13, 14, 15] {
            assert_eq!(x[i], c(0.0, 0.0));
        }
        assert_eq!(x[0], c(3.0, 0.0));
        let zero = build_frame(&[c(0.0, 0.0); 7], &l, c(2.0, 0.0)).unwrap();
        assert_eq!(zero.iter().map(|v| v.norm_sqr()).sum::<f64>(), 4.0);
        assert!(build_frame(&[c(1.0, 0.0); 6], &l, c(1.0, 0.0)).is_err());

        let z = FrameLayout::zero_padded(16, 8, 1).unwrap();
        assert_eq!(z.data_indices(), (7..15).collect::<Vec<_>>());
        let d = FrameLayout::data_only(4);
        let data = [c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)];
        assert_eq!(build_frame(&data, &d, c(9.0, 0.0)).unwrap(), data.to_vec());
    }

    #[test]
    fn cpp_is_cp_when_2nc1_integer_and_n_even() {
        let s: Vec<Complex64> = (0..8).map(|k| c(k as f64, -(k as f64) * 0.5)).collect();
        let out = add_cpp(&s, 3, 3.0 / 16.0).unwrap();
        for k in 0..3 {
            assert!((out[k] - s[5 + k]).norm() < 1e-12);
        }
        assert_eq!(add_cpp(&s, 0, 0.3).unwrap(), s);
        assert!(add_cpp(&s, 8, 0.0).is_err());
    }

    #[test]
    fn cpp_phase_direct_evaluation() {
        let n = 8usize;
        let c1 = 1.0 / (4.0 * n as f64);
        let s: Vec<Complex64> = (0..n).map(|k| c(1.0 + k as f64, 0.25)).collect();
        let out = add_cpp(&s, 2, c1).unwrap();
        for (pos, idx) in [(0usize, -2.0f64), (1, -1.0)] {
            let ph = -2.0 * std::f64::consts::PI * c1 * (64.0 + 16.0 * idx);
            let want = s[(n as f64 + idx) as usize] * Complex64::from_polar(1.0, ph);
            assert!((out[pos] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn single_subcarrier_is_a_chirp() {
        let p = DaftParams::new(8, 0.1, 0.03).unwrap();
        let mut x = vec![c(0.0, 0.0); 8];
        x[3] = c(1.0, 0.0);
        let s = modulate(&x, &p).unwrap();
        for v in &s {
            assert!((v.norm() - 1.0 / 8f64.sqrt()).abs() < 1e-12);
        }
        let back = demodulate(&strip_cpp(&add_cpp(&s, 2, p.c1).unwrap(), 2).unwrap(), &p).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
