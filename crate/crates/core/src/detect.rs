//! Detectors operating on `y = H x + w`, where the columns of `H` are the
//! effective-channel columns of the data positions.
//!
//! - [`ml_detect`]: exact maximum likelihood by depth-first branch and bound
//!   over the QR factorisation, children visited in order of increasing
//!   partial metric.
//! - [`lmmse_detect`]: `(H^H H + γ⁻¹ I)⁻¹ H^H y` by envelope Cholesky.
//! - [`ExactGram`]: the same estimate on the exact effective channel of
//!   any column subset, with `H^H H` formed through the time domain.
//! - [`mrc_dfe_detect`]: the weighted MRC-based decision-feedback detector.
//!   Each sweep is one Gauss-Seidel step on the LMMSE normal equations, so
//!   its fixed point is the LMMSE estimate.
//! - [`spectral_radius`]: `ρ(-S⁻¹ U)` of that Gauss-Seidel iteration.

use nalgebra::linalg::Schur;

use crate::channel::{time_channel_sparse, LtvChannel};
use crate::daft::{daft, idaft, DaftParams};
use crate::effective::EffectiveChannel;
use crate::linalg::{EnvelopeMatrix, SparseColumns};
use crate::modem::{Alphabet, FrameLayout};
use crate::{check_len, CMatrix, Complex64, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest number of candidate frames ML detection may cover.
pub const ML_BUDGET: u128 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfeConfig {
    /// Linear SNR.
    pub gamma: f64,
    pub n_iter: usize,
    /// Stop once `‖x̂⁽ⁿ⁾ - x̂⁽ⁿ⁻¹⁾‖₂ < epsilon`.
    pub epsilon: f64,
}

impl DfeConfig {
    pub fn new(gamma: f64, n_iter: usize, epsilon: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be positive and finite, got {gamma}")));
        }
        if n_iter == 0 {
            return Err(Error::Config("n_iter must be at least 1".into()));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { gamma, n_iter, epsilon })
    }

    /// `n_iter = 20`, `ε = 1e-6 √(data length)`.
    pub fn with_defaults(gamma: f64, data_len: usize) -> Result<Self> {
        Self::new(gamma, 20, 1e-6 * (data_len as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Soft estimates.
    pub symbols: Vec<Complex64>,
    /// Soft estimates sliced to the alphabet.
    pub hard: Vec<Complex64>,
    pub iterations_used: usize,
    /// Complex operations, `5 L_k + 1` per column and sweep.
    pub op_count: u64,
    /// `‖x̂⁽ⁿ⁾ - x̂⁽ⁿ⁻¹⁾‖₂` of the last sweep.
    pub final_delta: f64,
    /// Incrementally maintained residual `y - H x̂`.
    pub residual: Vec<Complex64>,
}

/// Exact ML over the data columns `h` (dense, `N × K`, `N >= K`).
pub fn ml_detect_matrix(y: &[Complex64], h: &CMatrix, a: &Alphabet) -> Result<Vec<Complex64>> {
    let (n, k) = h.shape();
    check_len(y.len(), n)?;
    let candidates = (a.size() as u128).checked_pow(k as u32);
    if candidates.is_none_or(|c| c > ML_BUDGET) {
        return Err(Error::Capacity(format!(
            "ML over {} symbols of a {}-point alphabet exceeds the budget of {ML_BUDGET} candidates",
            k,
            a.size()
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    if n < k {
        return Err(Error::Config(format!("ML needs at least as many observations ({n}) as symbols ({k})")));
    }
    let qr = h.clone().qr();
    let r = qr.r();
    let z = qr.q().adjoint() * nalgebra::DVector::from_column_slice(y);
    Ok(BranchAndBound::new(&r, z.as_slice(), a).run())
}

struct BranchAndBound<'a> {
    r: &'a CMatrix,
    z: &'a [Complex64],
    pts: &'a [Complex64],
    k: usize,
    x: Vec<Complex64>,
    best: Vec<Complex64>,
    best_metric: f64,
}

impl<'a> BranchAndBound<'a> {
    fn new(r: &'a CMatrix, z: &'a [Complex64], a: &'a Alphabet) -> Self {
        let k = r.ncols();
        Self {
            r,
            z,
            pts: &a.points,
            k,
            x: vec![ZERO; k],
            best: vec![ZERO; k],
            best_metric: f64::INFINITY,
        }
    }

    fn run(mut self) -> Vec<Complex64> {
        self.descend(self.k - 1, 0.0);
        self.best
    }

    fn descend(&mut self, level: usize, partial: f64) {
        let mut interference = self.z[level];
        for j in level + 1..self.k {
            interference -= self.r[(level, j)] * self.x[j];
        }
        let rll = self.r[(level, level)];
        let mut children: Vec<(f64, usize)> = self
            .pts
            .iter()
            .enumerate()
            .map(|(i, &p)| ((interference - rll * p).norm_sqr(), i))
            .collect();
        children.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (inc, i) in children {
            let m = partial + inc;
            if m >= self.best_metric {
                break;
            }
            self.x[level] = self.pts[i];
            if level == 0 {
                self.best_metric = m;
                self.best.copy_from_slice(&self.x);
            } else {
                self.descend(level - 1, m);
            }
        }
    }
}

/// Exact ML for the data symbols of `layout`. Any pilot contribution must
/// already be removed from `y`.
pub fn ml_detect(y: &[Complex64], heff: &EffectiveChannel, a: &Alphabet, layout: &FrameLayout) -> Result<Vec<Complex64>> {
    let cols = layout.data_indices();
    let candidates = (a.size() as u128).checked_pow(cols.len() as u32);
    if candidates.is_none_or(|c| c > ML_BUDGET) {
        return Err(Error::Capacity(format!(
            "ML over {} symbols of a {}-point alphabet exceeds the budget of {ML_BUDGET} candidates",
            cols.len(),
            a.size()
        )));
    }
    let h = heff.columns(&cols, None).to_dense();
    ml_detect_matrix(y, &h, a)
}

/// LMMSE estimate `(H^H H + γ⁻¹ I)⁻¹ H^H y`.
pub fn lmmse_detect(y: &[Complex64], h: &SparseColumns, gamma: f64) -> Result<Vec<Complex64>> {
    check_len(y.len(), h.nrows())?;
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    let rhs = h.adjoint_mul_vec(y);
    Ok(h.gram(1.0 / gamma).cholesky()?.solve(&rhs))
}

/// LMMSE for a data-only frame computed in the time domain:
/// `A (H_t^H H_t + γ⁻¹ I)⁻¹ H_t^H r` with the sparse time-domain channel
/// `H_t`. Equal to [`lmmse_detect`] on the full effective channel.
pub fn lmmse_time_domain(r: &[Complex64], ch: &LtvChannel, p: &DaftParams, gamma: f64) -> Result<Vec<Complex64>> {
    let ht = time_channel_sparse(ch, p);
    let s = lmmse_detect(r, &ht, gamma)?;
    daft(&s, p)
}

/// Exact `H_d^H H_d` for the columns `cols` of `H_eff = A H A^H`. Column `j`
/// of `A H^H H A^H` costs one transform pair and two sparse products, since
/// the time-domain `H` has `P` entries per row. The Gram matrix does not
/// depend on the SNR, so one instance serves a whole sweep.
#[derive(Debug, Clone)]
pub struct ExactGram {
    params: DaftParams,
    ht: SparseColumns,
    cols: Vec<usize>,
    gram: CMatrix,
}

impl ExactGram {
    pub fn new(ch: &LtvChannel, p: &DaftParams, cols: &[usize]) -> Result<Self> {
        check_len(ch.n, p.n)?;
        let n = p.n;
        if let Some(&bad) = cols.iter().find(|&&c| c >= n) {
            return Err(Error::Config(format!("column {bad} is outside a frame of {n}")));
        }
        let ht = time_channel_sparse(ch, p);
        let k = cols.len();
        let mut gram = CMatrix::zeros(k, k);
        let mut e = vec![ZERO; n];
        for (j, &cj) in cols.iter().enumerate() {
            e[cj] = Complex64::new(1.0, 0.0);
            let s = idaft(&e, p)?;
            e[cj] = ZERO;
            let full = daft(&ht.adjoint_mul_vec(&ht.mul_vec(&s)), p)?;
            for (i, &ci) in cols.iter().enumerate() {
                gram[(i, j)] = full[ci];
            }
        }
        Ok(Self { params: *p, ht, cols: cols.to_vec(), gram })
    }

    pub fn gram(&self) -> &CMatrix {
        &self.gram
    }

    /// `H_d^H y`.
    pub fn adjoint_mul(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(y.len(), self.params.n)?;
        let full = daft(&self.ht.adjoint_mul_vec(&idaft(y, &self.params)?), &self.params)?;
        Ok(self.cols.iter().map(|&c| full[c]).collect())
    }

    /// `(H_d^H H_d + γ⁻¹ I)⁻¹ H_d^H y`.
    pub fn lmmse(&self, y: &[Complex64], gamma: f64) -> Result<Vec<Complex64>> {
        if !(gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        let rhs = self.adjoint_mul(y)?;
        let mut m = self.gram.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += Complex64::new(1.0 / gamma, 0.0);
        }
        let chol = nalgebra::Cholesky::new(m)
            .ok_or_else(|| Error::Numerical("regularised Gram matrix is not positive definite".into()))?;
        Ok(chol.solve(&nalgebra::DVector::from_vec(rhs)).as_slice().to_vec())
    }
}

/// Weighted MRC-based DFE. Starts from `x̂ = 0`, `Δy = y`.
pub fn mrc_dfe_detect(y: &[Complex64], h: &SparseColumns, cfg: &DfeConfig, a: &Alphabet) -> Result<DetectionResult> {
    check_len(y.len(), h.nrows())?;
    let k = h.ncols();
    let inv_gamma = 1.0 / cfg.gamma;
    let d: Vec<f64> = (0..k).map(|c| h.col(c).iter().map(|e| e.1.norm_sqr()).sum()).collect();
    let per_sweep: u64 = (0..k).map(|c| 5 * h.col(c).len() as u64 + 1).sum();

    let mut x = vec![ZERO; k];
    let mut dy = y.to_vec();
    let mut iterations_used = 0;
    let mut final_delta = 0.0;
    for it in 1..=cfg.n_iter {
        let mut delta_sq = 0.0;
        for c in 0..k {
            let col = h.col(c);
            let mut g = x[c] * d[c];
            for &(q, v) in col {
                g += v.conj() * dy[q];
            }
            let est = g / (d[c] + inv_gamma);
            let delta = est - x[c];
            for &(q, v) in col {
                dy[q] -= v * delta;
            }
            x[c] = est;
            delta_sq += delta.norm_sqr();
        }
        iterations_used = it;
        final_delta = delta_sq.sqrt();
        if final_delta < cfg.epsilon {
            break;
        }
    }
    let hard = x.iter().map(|&z| a.slice(z)).collect();
    Ok(DetectionResult {
        symbols: x,
        hard,
        iterations_used,
        op_count: per_sweep * iterations_used as u64,
        final_delta,
        residual: dy,
    })
}

/// `w = G v` with `G = -S⁻¹ U`, `S` the lower triangle (with diagonal) and
/// `U` the strict upper triangle of the Hermitian matrix `r`.
fn gauss_seidel_apply(r: &EnvelopeMatrix, v: &[Complex64]) -> Vec<Complex64> {
    let n = r.dim();
    let mut b = vec![ZERO; n];
    for j in 0..n {
        let f = r.first(j);
        let row = r.row(j);
        for (t, &rji) in row[..row.len() - 1].iter().enumerate() {
            // U[i][j] = conj(R[j][i]) for i < j
            b[f + t] -= rji.conj() * v[j];
        }
    }
    for i in 0..n {
        let f = r.first(i);
        let row = r.row(i);
        let mut s = b[i];
        for (t, &rij) in row[..row.len() - 1].iter().enumerate() {
            s -= rij * b[f + t];
        }
        b[i] = s / row[row.len() - 1];
    }
    b
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Eigenvector of a small matrix for eigenvalue `lambda` by inverse iteration.
fn small_eigenvector(hm: &CMatrix, lambda: Complex64) -> Vec<Complex64> {
    let m = hm.nrows();
    let shift = lambda + Complex64::new(1e-10 * lambda.norm().max(1e-300), 0.0);
    let shifted = hm - CMatrix::identity(m, m) * shift;
    let lu = shifted.lu();
    let mut y = nalgebra::DVector::from_element(m, Complex64::new(1.0, 0.0));
    for _ in 0..3 {
        match lu.solve(&y) {
            Some(s) => {
                let nrm = s.norm();
                if !(nrm > 0.0) || !nrm.is_finite() {
                    break;
                }
                y = s / Complex64::new(nrm, 0.0);
            }
            None => break,
        }
    }
    y.as_slice().to_vec()
}

/// Spectral radius of the Gauss-Seidel iteration matrix `-S⁻¹(R - S)` for
/// `R = H^H H + γ⁻¹ I`, by restarted Arnoldi on the sparse operator.
pub fn spectral_radius(h: &SparseColumns, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    let r = h.gram(1.0 / gamma);
    let n = r.dim();
    if n == 0 {
        return Ok(0.0);
    }
    let m = n.min(40);
    let mut start: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0 / (1.0 + i as f64).sqrt(), 0.7 * i as f64))
        .collect();
    let mut prev = f64::NAN;
    let mut rho = 0.0;
    for _ in 0..200 {
        let s0 = norm(&start);
        let mut basis: Vec<Vec<Complex64>> = vec![start.iter().map(|z| z / s0).collect()];
        let mut hm = CMatrix::zeros(m + 1, m);
        let mut dim = m;
        for j in 0..m {
            let mut w = gauss_seidel_apply(&r, &basis[j]);
            let wn0 = norm(&w);
            for _ in 0..2 {
                for (i, b) in basis.iter().enumerate() {
                    let c = dot(b, &w);
                    hm[(i, j)] += c;
                    for (wk, bk) in w.iter_mut().zip(b) {
                        *wk -= c * bk;
                    }
                }
            }
            let wn = norm(&w);
            hm[(j + 1, j)] = Complex64::new(wn, 0.0);
            if wn <= 1e-13 * wn0.max(1e-300) || wn == 0.0 || j + 1 == n {
                dim = j + 1;
                break;
            }
            basis.push(w.iter().map(|z| z / wn).collect());
        }
        let hsq = hm.view((0, 0), (dim, dim)).into_owned();
        let eig = Schur::new(hsq.clone())
            .eigenvalues()
            .ok_or_else(|| Error::Numerical("Ritz eigenvalues unavailable".into()))?;
        let (idx, lambda) = eig
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .map(|(i, l)| (i, *l))
            .unwrap_or((0, ZERO));
        let _ = idx;
        rho = lambda.norm();
        let exact = dim < m || dim == n;
        if exact || rho == 0.0 {
            return Ok(rho);
        }
        let yv = small_eigenvector(&hsq, lambda);
        let resid = hm[(dim, dim - 1)].norm() * yv[dim - 1].norm();
        if resid <= 1e-10 * rho.max(1e-300) || (prev - rho).abs() <= 1e-13 * rho {
            return Ok(rho);
        }
        prev = rho;
        let mut next = vec![ZERO; n];
        for (b, &c) in basis.iter().zip(&yv) {
            for (nk, bk) in next.iter_mut().zip(b) {
                *nk += c * bk;
            }
        }
        // keep a little of the previous start so other dominant directions survive
        for (nk, sk) in next.iter_mut().zip(&basis[0]) {
            *nk += sk * 1e-3;
        }
        start = next;
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_gaussian_vec, stream_rng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn brute_force(y: &[Complex64], h: &CMatrix, a: &Alphabet) -> Vec<Complex64> {
        let k = h.ncols();
        let mut best = (f64::INFINITY, vec![]);
        for idx in 0..a.size().pow(k as u32) {
            let x: Vec<Complex64> = (0..k).map(|j| a.points[(idx / a.size().pow(j as u32)) % a.size()]).collect();
            let hx = h * nalgebra::DVector::from_vec(x.clone());
            let m: f64 = y.iter().zip(hx.iter()).map(|(u, v)| (u - v).norm_sqr()).sum();
            if m < best.0 {
                best = (m, x);
            }
        }
        best.1
    }

    fn random_banded(n: usize, bw: usize, seed: u64) -> SparseColumns {
        let mut rng = stream_rng(seed, 0);
        let mut m = SparseColumns::zeros(n, n);
        for col in 0..n {
            let v = complex_gaussian_vec(&mut rng, bw, 1.0);
            for (t, z) in v.into_iter().enumerate() {
                m.add((col + t) % n, col, z);
            }
        }
        m
    }

    #[test]
    fn ml_matches_brute_force() {
        let a = Alphabet::qpsk();
        for seed in 0..20 {
            let mut rng = stream_rng(seed, 1);
            let h = CMatrix::from_vec(6, 4, complex_gaussian_vec(&mut rng, 24, 1.0));
            let y = complex_gaussian_vec(&mut rng, 6, 2.0);
            assert_eq!(ml_detect_matrix(&y, &h, &a).unwrap(), brute_force(&y, &h, &a));
        }
    }

    #[test]
    fn ml_sign_detector_and_capacity() {
        let a = Alphabet::bpsk();
        let h = CMatrix::identity(4, 4);
        let y = [c(0.9, 0.1), c(-0.2, 0.3), c(0.05, -1.0), c(-3.0, 0.0)];
        let x = ml_detect_matrix(&y, &h, &a).unwrap();
        assert_eq!(x, vec![c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)]);
        let big = CMatrix::identity(25, 25);
        assert!(matches!(ml_detect_matrix(&[c(0.0, 0.0); 25], &big, &a), Err(Error::Capacity(_))));
    }

    #[test]
    fn lmmse_zf_limit_and_zero() {
        let h = random_banded(8, 3, 3);
        let mut rng = stream_rng(9, 0);
        let y = complex_gaussian_vec(&mut rng, 8, 1.0);
        let x = lmmse_detect(&y, &h, 1e12).unwrap();
        let zf = h.to_dense().lu().solve(&nalgebra::DVector::from_vec(y.clone())).unwrap();
        for (a, b) in x.iter().zip(zf.iter()) {
            assert!((a - b).norm() < 1e-6);
        }
        let z = lmmse_detect(&[c(0.0, 0.0); 8], &h, 10.0).unwrap();
        assert!(z.iter().all(|v| *v == c(0.0, 0.0)));
    }

    #[test]
    fn lmmse_matches_dense_solve() {
        let h = random_banded(16, 4, 5);
        let mut rng = stream_rng(11, 0);
        let y = complex_gaussian_vec(&mut rng, 16, 1.0);
        let gamma = 7.5;
        let hd = h.to_dense();
        let lhs = hd.adjoint() * &hd + CMatrix::identity(16, 16) * c(1.0 / gamma, 0.0);
        let rhs = hd.adjoint() * nalgebra::DVector::from_vec(y.clone());
        let want = lhs.lu().solve(&rhs).unwrap();
        let got = lmmse_detect(&y, &h, gamma).unwrap();
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn dfe_diagonal_is_scalar_mmse() {
        let mut h = SparseColumns::zeros(4, 4);
        let diag = [c(1.0, 0.5), c(-0.3, 0.2), c(2.0, 0.0), c(0.0, -1.0)];
        for (i, &v) in diag.iter().enumerate() {
            h.add(i, i, v);
        }
        let y = [c(0.3, 0.1), c(1.0, -1.0), c(-0.5, 0.25), c(0.0, 2.0)];
        let cfg = DfeConfig::new(4.0, 20, 1e-12).unwrap();
        let res = mrc_dfe_detect(&y, &h, &cfg, &Alphabet::qpsk()).unwrap();
        assert_eq!(res.iterations_used, 2);
        for i in 0..4 {
            let want = diag[i].conj() * y[i] / (diag[i].norm_sqr() + 0.25);
            assert!((res.symbols[i] - want).norm() < 1e-14);
        }
        assert_eq!(res.op_count, 2 * 4 * 6);
        assert_eq!(spectral_radius(&h, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn dfe_zero_observation() {
        let h = random_banded(8, 2, 1);
        let cfg = DfeConfig::new(10.0, 5, 1e-9).unwrap();
        let res = mrc_dfe_detect(&[c(0.0, 0.0); 8], &h, &cfg, &Alphabet::bpsk()).unwrap();
        assert!(res.symbols.iter().all(|v| *v == c(0.0, 0.0)));
        assert_eq!(res.iterations_used, 1);
    }

    #[test]
    fn dfe_converges_to_lmmse_with_consistent_residual() {
        let h = random_banded(24, 3, 17);
        let mut rng = stream_rng(4, 0);
        let y = complex_gaussian_vec(&mut rng, 24, 1.0);
        let gamma = 20.0;
        let cfg = DfeConfig::new(gamma, 5000, 1e-13).unwrap();
        let res = mrc_dfe_detect(&y, &h, &cfg, &Alphabet::qpsk()).unwrap();
        let want = lmmse_detect(&y, &h, gamma).unwrap();
        for (a, b) in res.symbols.iter().zip(&want) {
            assert!((a - b).norm() < 1e-9);
        }
        let hx = h.mul_vec(&res.symbols);
        for i in 0..24 {
            assert!((res.residual[i] - (y[i] - hx[i])).norm() < 1e-10);
        }
    }

    fn dense_rho(h: &SparseColumns, gamma: f64) -> f64 {
        let hd = h.to_dense();
        let n = hd.ncols();
        let r = hd.adjoint() * &hd + CMatrix::identity(n, n) * c(1.0 / gamma, 0.0);
        let s = CMatrix::from_fn(n, n, |i, j| if j <= i { r[(i, j)] } else { c(0.0, 0.0) });
        let u = &r - &s;
        let g = -s.try_inverse().unwrap() * u;
        Schur::new(g).eigenvalues().unwrap().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn spectral_radius_matches_dense_eigensolver() {
        for seed in 0..10 {
            let h = random_banded(60, 3, 100 + seed);
            let rho = spectral_radius(&h, 10.0).unwrap();
            let want = dense_rho(&h, 10.0);
            assert!(rho < 1.0);
            assert!((rho - want).abs() < 1e-6, "{rho} vs {want}");
        }
    }
}
