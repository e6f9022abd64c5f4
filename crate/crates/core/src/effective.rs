//! DAFT-domain effective channel `H_eff = A H A^H` and the parameter rules
//! that keep paths apart in it.
//!
//! For a unit-gain path with delay `l` and Doppler `ν`, the effective matrix
//! has entries
//!
//! ```text
//! H_i[p, q] = 1/N exp(j2π/N (N c1 l² - q l + N c2 (q² - p²))) F_i(p, q)
//! F_i(p, q) = Σ_n exp(-j2π/N (p - q + ν + 2 N c1 l) n)
//! ```
//!
//! With integer `ν` every row holds a single unit-modulus entry at
//! `q = (p + loc)_N`, `loc = (α + 2 N c1 l)_N`. Fractional `ν` spreads the
//! row around that position with a Dirichlet-kernel envelope.

use crate::channel::{ChannelPath, LtvChannel};
use crate::daft::{cis_turns, daft_matrix, DaftParams};
use crate::linalg::SparseColumns;
use crate::modem::FrameLayout;
use crate::{CMatrix, Complex64, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Envelope level below which fractional-Doppler leakage is neglected when
/// picking the default `k_ν`.
pub const K_NU_THRESHOLD: f64 = 0.02;

/// `A H A^H` by dense conjugation.
pub fn heff_from_time(h: &CMatrix, p: &DaftParams) -> Result<CMatrix> {
    if h.nrows() != p.n || h.ncols() != p.n {
        return Err(Error::Dimension { expected: p.n, actual: h.nrows().max(h.ncols()) });
    }
    let a = daft_matrix(p);
    Ok(&a * h * a.adjoint())
}

/// `2 N c1` as an exact integer, if it is one to within `1e-9`.
pub fn two_n_c1(p: &DaftParams) -> Option<i64> {
    let t = 2.0 * p.n as f64 * p.c1;
    let r = t.round();
    ((t - r).abs() < 1e-9).then_some(r as i64)
}

/// `loc = (α + 2 N c1 l) mod N`.
pub fn path_loc(alpha: i64, l: usize, p: &DaftParams) -> Result<usize> {
    let t = two_n_c1(p)
        .ok_or_else(|| Error::Config(format!("2 N c1 = {} is not an integer", 2.0 * p.n as f64 * p.c1)))?;
    Ok((alpha + t * l as i64).rem_euclid(p.n as i64) as usize)
}

/// First chirp rate: `(2 α_max + 1) / 2N` for integer Doppler and
/// `(2 (α_max + ξ_ν) + 1) / 2N` for fractional Doppler.
pub fn choose_c1(alpha_max: usize, xi_nu: usize, n: usize, fractional: bool) -> f64 {
    let spread = if fractional { alpha_max + xi_nu } else { alpha_max };
    (2 * spread + 1) as f64 / (2 * n) as f64
}

/// How the second chirp rate is picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum C2Mode {
    /// `1 / (2 N π)`.
    Irrational,
    /// `1 / (4 N²)`, well below `1 / 2N`.
    SmallRational,
}

pub fn choose_c2(n: usize, mode: C2Mode) -> f64 {
    let n = n as f64;
    match mode {
        C2Mode::Irrational => 1.0 / (2.0 * n * std::f64::consts::PI),
        C2Mode::SmallRational => 1.0 / (4.0 * n * n),
    }
}

/// Non-overlap condition `2(α_max + k_ν) l_max + 2(α_max + k_ν) + l_max < N`
/// (`k_ν = 0` gives the integer-Doppler condition).
pub fn check_separability(l_max: usize, alpha_max: usize, k_nu: usize, n: usize) -> bool {
    let a = alpha_max + k_nu;
    2 * a * l_max + 2 * a + l_max < n
}

/// Null guard count `Q = (l_max + 1)(2(α_max + ξ_ν) + 1) - 1`.
pub fn guard_count(l_max: usize, alpha_max: usize, xi_nu: usize) -> usize {
    (l_max + 1) * (2 * (alpha_max + xi_nu) + 1) - 1
}

/// Largest Dirichlet-kernel magnitude `|sin(πz) / (N sin(πz/N))|` at
/// `z = a - offset` over fractional parts `a ∈ [-1/2, 1/2]`.
pub fn leakage_envelope(offset: usize, n: usize) -> f64 {
    let nf = n as f64;
    (0..=200)
        .map(|k| {
            let a = -0.5 + k as f64 / 200.0;
            let z = a - offset as f64;
            let den = nf * (std::f64::consts::PI * z / nf).sin();
            if den.abs() < 1e-300 {
                1.0
            } else {
                ((std::f64::consts::PI * z).sin() / den).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Smallest `k` whose worst-case leakage at offset `k + 1` is below
/// [`K_NU_THRESHOLD`], capped at `(N - 1) / 2`.
pub fn default_k_nu(n: usize) -> usize {
    let cap = (n.saturating_sub(1)) / 2;
    (0..cap).find(|&k| leakage_envelope(k + 1, n) < K_NU_THRESHOLD).unwrap_or(cap)
}

/// Closed-form DAFT-domain response of one unit-gain path.
#[derive(Debug, Clone)]
pub struct PathResponse {
    pub delay: usize,
    pub doppler: f64,
    /// Integer position `α + 2 N c1 l` before reduction modulo `N`.
    pub center: i64,
    /// `loc = center mod N`.
    pub loc: usize,
    /// Residual offset from `center`; equals the fractional Doppler when
    /// `2 N c1` is an integer.
    pub frac: f64,
    n: usize,
    row_phase: Vec<Complex64>,
    col_phase: Vec<Complex64>,
}

/// Per-path closed-form entries of `H_i`.
pub fn heff_entries(path: &ChannelPath, p: &DaftParams) -> PathResponse {
    PathResponse::new(path.delay, path.doppler, p)
}

/// Diagonal index `center` and fractional part of a path, `frac` in
/// `[-1/2, 1/2)`.
fn placement(delay: usize, doppler: f64, p: &DaftParams) -> (i64, f64) {
    match two_n_c1(p) {
        Some(t) => {
            let alpha = (doppler - 0.5).ceil();
            (alpha as i64 + t * delay as i64, doppler - alpha)
        }
        None => {
            let s = doppler + 2.0 * p.n as f64 * p.c1 * delay as f64;
            let c = (s - 0.5).ceil();
            (c as i64, s - c)
        }
    }
}

fn row_phase(p: &DaftParams, k: usize) -> Complex64 {
    cis_turns(-p.c2 * (k * k) as f64)
}

fn col_phase(delay: usize, p: &DaftParams, q: usize) -> Complex64 {
    let n = p.n;
    let l = delay as f64;
    let lq = ((delay * q) % n) as f64 / n as f64;
    cis_turns(p.c1 * l * l + p.c2 * (q * q) as f64 - lq)
}

fn kernel(frac: f64, m: i64, n: usize) -> Complex64 {
    if frac == 0.0 {
        return if m.rem_euclid(n as i64) == 0 { Complex64::new(1.0, 0.0) } else { ZERO };
    }
    let z = frac - m as f64;
    let num = cis_turns(-frac) - 1.0;
    let den = cis_turns(-z / n as f64) - 1.0;
    num / den / n as f64
}

impl PathResponse {
    pub fn new(delay: usize, doppler: f64, p: &DaftParams) -> Self {
        let n = p.n;
        let (center, frac) = placement(delay, doppler, p);
        let row_phase = (0..n).map(|k| row_phase(p, k)).collect();
        let col_phase = (0..n).map(|q| col_phase(delay, p, q)).collect();
        Self {
            delay,
            doppler,
            center,
            loc: center.rem_euclid(n as i64) as usize,
            frac,
            n,
            row_phase,
            col_phase,
        }
    }

    /// Entries `H_i[r, q]` for the given rows of one column, without the
    /// O(N) set-up of [`PathResponse::new`].
    pub fn column_entries(delay: usize, doppler: f64, p: &DaftParams, q: usize, rows: &[usize]) -> Vec<Complex64> {
        let (center, frac) = placement(delay, doppler, p);
        let cp = col_phase(delay, p, q);
        rows.iter()
            .map(|&r| {
                let m = (q as i64 - r as i64 - center).rem_euclid(p.n as i64);
                row_phase(p, r) * cp * kernel(frac, m, p.n)
            })
            .collect()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_integer(&self) -> bool {
        self.frac == 0.0
    }

    /// `F_i / N` at `q = p + center + m`, i.e. `z = frac - m`.
    pub fn kernel(&self, m: i64) -> Complex64 {
        kernel(self.frac, m, self.n)
    }

    /// Entry `H_i[p, q]`.
    pub fn entry(&self, p: usize, q: usize) -> Complex64 {
        let m = (q as i64 - p as i64 - self.center).rem_euclid(self.n as i64);
        self.row_phase[p] * self.col_phase[q] * self.kernel(m)
    }

    fn offsets(&self, half_width: usize) -> Vec<i64> {
        let n = self.n as i64;
        let hw = half_width as i64;
        if 2 * hw + 1 >= n {
            let lo = -(n - 1) / 2;
            (lo..lo + n).collect()
        } else {
            (-hw..=hw).collect()
        }
    }

    /// Row `p` restricted to `|q - (p + loc)_N| <= half_width` (circularly).
    pub fn row_band(&self, p: usize, half_width: usize) -> Vec<(usize, Complex64)> {
        let n = self.n as i64;
        self.offsets(half_width)
            .into_iter()
            .map(|m| {
                let q = (p as i64 + self.center + m).rem_euclid(n) as usize;
                (q, self.entry(p, q))
            })
            .filter(|e| e.1 != ZERO)
            .collect()
    }

    /// Column `q` restricted to the same band, as `(row, value, unreduced row)`.
    fn column_band_raw(&self, q: usize, half_width: usize) -> Vec<(usize, Complex64, i64)> {
        let n = self.n as i64;
        self.offsets(half_width)
            .into_iter()
            .map(|m| {
                let raw = q as i64 - self.center - m;
                let p = raw.rem_euclid(n) as usize;
                (p, self.entry(p, q), raw)
            })
            .filter(|e| e.1 != ZERO)
            .collect()
    }

    pub fn column_band(&self, q: usize, half_width: usize) -> Vec<(usize, Complex64)> {
        self.column_band_raw(q, half_width).into_iter().map(|(p, v, _)| (p, v)).collect()
    }

    /// Full `N × N` matrix `H_i`.
    pub fn dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.n, self.n);
        self.accumulate_dense(&mut m, Complex64::new(1.0, 0.0));
        m
    }

    fn accumulate_dense(&self, m: &mut CMatrix, gain: Complex64) {
        let n = self.n;
        let kern: Vec<Complex64> = (0..n as i64).map(|k| self.kernel(k)).collect();
        for q in 0..n {
            let cq = gain * self.col_phase[q];
            for p in 0..n {
                let k = (q as i64 - p as i64 - self.center).rem_euclid(n as i64) as usize;
                if kern[k] != ZERO {
                    m[(p, q)] += self.row_phase[p] * cq * kern[k];
                }
            }
        }
    }
}

/// Effective channel of one realisation: gains plus per-path closed forms.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    pub params: DaftParams,
    pub gains: Vec<Complex64>,
    pub paths: Vec<PathResponse>,
    /// Half-width of the band kept per path for fractional Doppler.
    pub k_nu: usize,
    /// Extra Doppler guard used by the frame design.
    pub xi_nu: usize,
}

impl EffectiveChannel {
    pub fn new(ch: &LtvChannel, params: &DaftParams, k_nu: usize, xi_nu: usize) -> Result<Self> {
        if ch.n != params.n {
            return Err(Error::Dimension { expected: params.n, actual: ch.n });
        }
        Ok(Self {
            params: *params,
            gains: ch.paths.iter().map(|p| p.gain).collect(),
            paths: ch.paths.iter().map(|p| heff_entries(p, params)).collect(),
            k_nu,
            xi_nu,
        })
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn is_integer(&self) -> bool {
        self.paths.iter().all(PathResponse::is_integer)
    }

    /// Exact dense `H_eff`.
    pub fn dense(&self) -> CMatrix {
        let n = self.n();
        let mut m = CMatrix::zeros(n, n);
        for (path, &g) in self.paths.iter().zip(&self.gains) {
            path.accumulate_dense(&mut m, g);
        }
        m
    }

    /// `H_eff` with every path truncated to `2 k_ν + 1` entries per row
    /// (exact for integer Doppler).
    pub fn band_dense(&self) -> CMatrix {
        let n = self.n();
        let mut m = CMatrix::zeros(n, n);
        for (path, &g) in self.paths.iter().zip(&self.gains) {
            let hw = if path.is_integer() { 0 } else { self.k_nu };
            for p in 0..n {
                for (q, v) in path.row_band(p, hw) {
                    m[(p, q)] += g * v;
                }
            }
        }
        m
    }

    /// Selected columns of `H_eff` in sparse form. `half_width = None` keeps
    /// exact full columns; `Some(k)` keeps `2k + 1` entries per path
    /// (integer-Doppler paths always keep exactly one).
    pub fn columns(&self, cols: &[usize], half_width: Option<usize>) -> SparseColumns {
        let n = self.n();
        let mut m = SparseColumns::zeros(n, cols.len());
        for (j, &q) in cols.iter().enumerate() {
            for (path, &g) in self.paths.iter().zip(&self.gains) {
                let hw = if path.is_integer() { 0 } else { half_width.unwrap_or(n) };
                for (p, v) in path.column_band(q, hw) {
                    m.add(p, j, g * v);
                }
            }
        }
        m
    }
}

/// Effective channel restricted to the data positions of a guarded frame.
#[derive(Debug, Clone)]
pub struct BandedChannel {
    /// `N × (number of data symbols)` matrix `H_eff T^H`.
    pub matrix: SparseColumns,
    /// Frame index of each column (the rows of `T`).
    pub columns: Vec<usize>,
    pub half_width: usize,
}

/// Truncate `H_eff` to the data columns of `layout`, keeping `2 ξ_ν + 1`
/// entries per path and column (one for integer Doppler). Fails when the
/// guards are too short for the band to avoid wrapping around the frame.
pub fn band_truncate(heff: &EffectiveChannel, layout: &FrameLayout) -> Result<BandedChannel> {
    if layout.n != heff.n() {
        return Err(Error::Dimension { expected: heff.n(), actual: layout.n });
    }
    let n = heff.n() as i64;
    let cols = layout.data_indices();
    let half_width = heff.xi_nu;
    let mut m = SparseColumns::zeros(heff.n(), cols.len());
    for (j, &q) in cols.iter().enumerate() {
        for (path, &g) in heff.paths.iter().zip(&heff.gains) {
            let hw = if path.is_integer() { 0 } else { half_width };
            for (p, v, raw) in path.column_band_raw(q, hw) {
                if raw < 0 || raw >= n {
                    return Err(Error::Config(format!(
                        "insufficient guards: column {q} of path (l={}, ν={}) wraps to row {p}",
                        path.delay, path.doppler
                    )));
                }
                m.add(p, j, g * v);
            }
        }
    }
    Ok(BandedChannel { matrix: m, columns: cols, half_width })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::time_channel_matrix;

    fn path(delay: usize, doppler: f64) -> ChannelPath {
        ChannelPath::new(Complex64::new(1.0, 0.0), delay, doppler)
    }

    #[test]
    fn parameter_rules() {
        assert_eq!(choose_c1(1, 0, 16, false), 3.0 / 32.0);
        assert_eq!(choose_c1(0, 0, 16, false), 1.0 / 32.0);
        assert_eq!(choose_c1(2, 1, 256, true), 7.0 / 512.0);
        assert!((choose_c2(16, C2Mode::Irrational) - 0.009947183943243459).abs() < 1e-15);
        assert_eq!(choose_c2(8, C2Mode::SmallRational), 1.0 / 256.0);

        assert!(check_separability(3, 1, 0, 16));
        assert!(!check_separability(3, 2, 0, 16));
        assert!(check_separability(0, 7, 0, 16));

        assert_eq!(guard_count(2, 1, 0), 8);
        assert_eq!(guard_count(0, 0, 0), 0);
        assert_eq!(guard_count(3, 2, 1), 27);
    }

    #[test]
    fn loc_arithmetic() {
        let p = DaftParams::new(16, 3.0 / 32.0, 0.01).unwrap();
        assert_eq!(path_loc(0, 0, &p).unwrap(), 0);
        assert_eq!(path_loc(1, 1, &p).unwrap(), 4);
        assert_eq!(path_loc(-1, 0, &p).unwrap(), 15);
        let bad = DaftParams::new(16, 0.1, 0.0).unwrap();
        assert!(matches!(path_loc(1, 1, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn static_path_is_identity() {
        let p = DaftParams::new(12, 0.37, 0.011).unwrap();
        let h = heff_entries(&path(0, 0.0), &p).dense();
        assert!(crate::max_abs(&(h - CMatrix::identity(12, 12))) < 1e-12);
        let eye = heff_from_time(&CMatrix::identity(12, 12), &p).unwrap();
        assert!(crate::max_abs(&(eye - CMatrix::identity(12, 12))) < 1e-12);
    }

    #[test]
    fn integer_rows_have_single_entry_at_loc() {
        let p = DaftParams::new(16, 3.0 / 32.0, choose_c2(16, C2Mode::Irrational)).unwrap();
        let r = heff_entries(&path(1, 1.0), &p);
        assert_eq!(r.loc, 4);
        let h = r.dense();
        for row in 0..16 {
            for q in 0..16 {
                let v = h[(row, q)].norm();
                if q == (row + 4) % 16 {
                    assert!((v - 1.0).abs() < 1e-12);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn closed_form_matches_conjugation_for_non_integer_shift() {
        // 2 N c1 not an integer and N odd: the prefix phase is not trivial
        let p = DaftParams::new(15, 0.0413, 0.0071).unwrap();
        let ch = LtvChannel::new(vec![ChannelPath::new(Complex64::new(0.3, -0.8), 2, 0.37)], 15).unwrap();
        let want = heff_from_time(&time_channel_matrix(&ch, &p), &p).unwrap();
        let got = EffectiveChannel::new(&ch, &p, 0, 0).unwrap().dense();
        assert!(crate::max_abs(&(want - got)) < 1e-12);
    }

    #[test]
    fn default_k_nu_values() {
        assert_eq!(default_k_nu(256), 16);
        assert_eq!(default_k_nu(16), 7);
        assert!(leakage_envelope(17, 256) < K_NU_THRESHOLD);
        assert!(leakage_envelope(16, 256) >= K_NU_THRESHOLD);
    }
}
