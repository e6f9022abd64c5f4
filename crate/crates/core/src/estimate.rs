//! Embedded-pilot channel estimation.
//!
//! The pilot sits at frame index 0 and is surrounded by `Q` nulls on each
//! side, so the received rows `[0, α_max + ξ_ν] ∪ [N_Q + α_max + ξ_ν + 1, N)`
//! depend on the pilot alone. Integer Doppler is estimated by peak picking
//! over those rows; fractional Doppler by a matched-filter search over
//! `(l, α)`, a grid search over the fractional part and a joint
//! least-squares solve for the gains.

use crate::channel::{ChannelPath, LtvChannel};
use crate::daft::DaftParams;
use crate::effective::{two_n_c1, PathResponse};
use crate::modem::{FrameLayout, LayoutKind};
use crate::{check_len, CMatrix, Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEstimate {
    pub delay: usize,
    pub doppler_int: i64,
    /// In `[-1/2, 1/2]`.
    pub doppler_frac: f64,
    pub gain: Complex64,
}

impl PathEstimate {
    pub fn doppler(&self) -> f64 {
        self.doppler_int as f64 + self.doppler_frac
    }

    pub fn to_path(&self) -> ChannelPath {
        ChannelPath::new(self.gain, self.delay, self.doppler())
    }
}

/// Channel assembled from path estimates.
pub fn estimates_to_channel(est: &[PathEstimate], n: usize) -> Result<LtvChannel> {
    LtvChannel::new(est.iter().map(PathEstimate::to_path).collect(), n)
}

/// Received samples that carry only the pilot.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationWindow {
    pub params: DaftParams,
    /// Frame rows in the window, ascending.
    pub rows: Vec<usize>,
    pub y: Vec<Complex64>,
    pub x_pilot: Complex64,
}

/// Window rows `[0, s] ∪ [N_Q + s + 1, N)` with `s = α_max + ξ_ν`.
pub fn window_rows(n: usize, q: usize, alpha_max: usize, xi_nu: usize) -> Vec<usize> {
    let s = alpha_max + xi_nu;
    let n_q = n - q - 1;
    (0..=s.min(n - 1)).chain((n_q + s + 1).max(s + 1)..n).collect()
}

pub fn extract_window(
    y: &[Complex64],
    layout: &FrameLayout,
    params: &DaftParams,
    alpha_max: usize,
    xi_nu: usize,
    x_pilot: Complex64,
) -> Result<EstimationWindow> {
    let LayoutKind::EmbeddedPilot { q } = layout.kind else {
        return Err(Error::Config("channel estimation needs an embedded-pilot layout".into()));
    };
    check_len(y.len(), layout.n)?;
    check_len(params.n, layout.n)?;
    if alpha_max + xi_nu > q {
        return Err(Error::Config(format!("window spread {} exceeds the guard count {q}", alpha_max + xi_nu)));
    }
    let rows = window_rows(layout.n, q, alpha_max, xi_nu);
    Ok(EstimationWindow {
        params: *params,
        y: rows.iter().map(|&r| y[r]).collect(),
        rows,
        x_pilot,
    })
}

/// Window rows of the pilot column of a unit-gain path.
pub fn pilot_column(l: usize, nu: f64, window: &EstimationWindow) -> Vec<Complex64> {
    PathResponse::column_entries(l, nu, &window.params, 0, &window.rows)
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn check_pilot(w: &EstimationWindow) -> Result<()> {
    if w.x_pilot.norm() == 0.0 {
        return Err(Error::Estimation("pilot amplitude is zero".into()));
    }
    Ok(())
}

/// Integer-Doppler estimation: the `p_paths` largest window samples among
/// the rows reachable by some `(l, α)`, mapped back through
/// `loc = (α + 2 N c1 l) mod N`. Results are ordered by `(delay, α)`.
pub fn estimate_integer(w: &EstimationWindow, p_paths: usize, l_max: usize, alpha_max: usize) -> Result<Vec<PathEstimate>> {
    check_pilot(w)?;
    let n = w.params.n as i64;
    let t = two_n_c1(&w.params)
        .ok_or_else(|| Error::Config("integer estimation needs 2 N c1 to be an integer".into()))?;
    // window position -> (l, α)
    let mut owner: Vec<Option<(usize, i64)>> = vec![None; w.rows.len()];
    for l in 0..=l_max {
        for alpha in -(alpha_max as i64)..=alpha_max as i64 {
            let row = (-(alpha + t * l as i64)).rem_euclid(n) as usize;
            let Ok(pos) = w.rows.binary_search(&row) else {
                return Err(Error::Estimation(format!("path (l={l}, α={alpha}) falls outside the window")));
            };
            if let Some(prev) = owner[pos] {
                return Err(Error::Estimation(format!(
                    "paths {prev:?} and ({l}, {alpha}) share window row {row}"
                )));
            }
            owner[pos] = Some((l, alpha));
        }
    }
    let mut cand: Vec<(usize, f64)> =
        (0..w.rows.len()).filter(|&i| owner[i].is_some()).map(|i| (i, w.y[i].norm_sqr())).collect();
    if cand.len() < p_paths {
        return Err(Error::Estimation(format!("only {} admissible positions for {p_paths} paths", cand.len())));
    }
    cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out: Vec<PathEstimate> = cand[..p_paths]
        .iter()
        .map(|&(i, _)| {
            let (l, alpha) = owner[i].expect("admissible");
            let col = PathResponse::new(l, alpha as f64, &w.params).entry(w.rows[i], 0);
            PathEstimate { delay: l, doppler_int: alpha, doppler_frac: 0.0, gain: col.conj() * w.y[i] / w.x_pilot }
        })
        .collect();
    out.sort_by_key(|e| (e.delay, e.doppler_int));
    Ok(out)
}

fn matched_score(col: &[Complex64], y: &[Complex64]) -> f64 {
    let e: f64 = col.iter().map(|z| z.norm_sqr()).sum();
    if e == 0.0 {
        0.0
    } else {
        inner(col, y).norm_sqr() / e
    }
}

/// Cap on the coordinate passes; close paths couple along a ridge of the
/// joint objective and can need many passes to settle.
const REFINE_ROUNDS: usize = 50;

/// Orthonormal basis of the span of `cols` by modified Gram-Schmidt;
/// numerically dependent columns are dropped.
fn orthonormal_basis<'a>(cols: impl Iterator<Item = &'a [Complex64]>) -> Vec<Vec<Complex64>> {
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    for c in cols {
        let norm = inner(c, c).re;
        let v = deflate(c, &basis);
        let vn = inner(&v, &v).re;
        if vn > 1e-20 * norm && vn > 0.0 {
            let s = 1.0 / vn.sqrt();
            basis.push(v.iter().map(|z| z * s).collect());
        }
    }
    basis
}

/// `c` minus its projection on the orthonormal `basis`.
fn deflate(c: &[Complex64], basis: &[Vec<Complex64>]) -> Vec<Complex64> {
    let mut v = c.to_vec();
    for q in basis {
        let k = inner(q, &v);
        v.iter_mut().zip(q).for_each(|(x, qi)| *x -= qi * k);
    }
    v
}

/// Gains solving `G h = b`, `G[i][j] = c_i^H c_j`, `b_i = c_i^H y / x_pilot`.
pub fn joint_gains(cols: &[Vec<Complex64>], w: &EstimationWindow) -> Result<Vec<Complex64>> {
    check_pilot(w)?;
    let p = cols.len();
    let g = CMatrix::from_fn(p, p, |i, j| inner(&cols[i], &cols[j]));
    let b = nalgebra::DVector::from_fn(p, |i, _| inner(&cols[i], &w.y) / w.x_pilot);
    let scale = (0..p).map(|i| g[(i, i)].re).fold(0.0, f64::max);
    let sv = g.clone().singular_values();
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(scale > 0.0) || smin <= 1e-10 * scale {
        return Err(Error::Estimation("singular gain system".into()));
    }
    let h = g.lu().solve(&b).ok_or_else(|| Error::Estimation("singular gain system".into()))?;
    Ok(h.iter().copied().collect())
}

/// Phase-1 candidates `(l, α)` ranked by matched-filter score with `a = 0`.
fn ranked_candidates(w: &EstimationWindow, l_max: usize, alpha_max: usize) -> Vec<(usize, i64, f64)> {
    let mut cand = Vec::with_capacity((l_max + 1) * (2 * alpha_max + 1));
    for l in 0..=l_max {
        for alpha in -(alpha_max as i64)..=alpha_max as i64 {
            let col = pilot_column(l, alpha as f64, w);
            cand.push((l, alpha, matched_score(&col, &w.y)));
        }
    }
    cand.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    cand
}

/// Fractional-Doppler estimation. Phase 1 picks the `p_paths` best
/// `(l, α)` by matched-filter score with distinct delays. Phase 2 searches
/// the fractional part of each path on a grid of step `grid_resolution` over
/// `[-1/2, 1/2]`. Coordinate passes then move one path at a time to the
/// `(l, ν)` on the full grid (free delays, `|α| <= α_max`) that maximises
/// the joint projection energy, which models the leakage between paths and
/// so can correct phase-1 choices biased by it. Phase 3 solves the joint
/// gain system. Results are ordered by delay.
pub fn estimate_fractional(
    w: &EstimationWindow,
    p_paths: usize,
    l_max: usize,
    alpha_max: usize,
    grid_resolution: f64,
) -> Result<Vec<PathEstimate>> {
    check_pilot(w)?;
    if !(grid_resolution > 0.0 && grid_resolution <= 0.5) {
        return Err(Error::Config(format!("grid resolution must lie in (0, 1/2], got {grid_resolution}")));
    }
    if p_paths > l_max + 1 {
        return Err(Error::Estimation(format!("{p_paths} paths with distinct delays need l_max >= {}", p_paths - 1)));
    }
    let mut picked: Vec<(usize, i64)> = Vec::with_capacity(p_paths);
    for (l, alpha, _) in ranked_candidates(w, l_max, alpha_max) {
        if picked.len() == p_paths {
            break;
        }
        if picked.iter().all(|&(pl, _)| pl != l) {
            picked.push((l, alpha));
        }
    }
    let steps = (1.0 / grid_resolution).round() as i64;
    let grid: Vec<f64> = (0..=steps).map(|k| -0.5 + k as f64 / steps as f64).collect();
    let n_alpha = 2 * alpha_max + 1;
    let cell = |l: usize, alpha: i64| l * n_alpha + (alpha + alpha_max as i64) as usize;
    // bank[cell(l, α)][g]: window column of (l, α + grid[g])
    let bank: Vec<Vec<Vec<Complex64>>> = (0..=l_max)
        .flat_map(|l| (-(alpha_max as i64)..=alpha_max as i64).map(move |alpha| (l, alpha)))
        .map(|(l, alpha)| grid.iter().map(|&a| pilot_column(l, alpha as f64 + a, w)).collect())
        .collect();
    // a = 0 wins exact ties, otherwise the first candidate does
    let better = |s: f64, best: f64, a: f64| s > best || (s == best && a == 0.0);

    // state per path: (l, α, grid index)
    let mut state: Vec<(usize, i64, usize)> = picked
        .iter()
        .map(|&(l, alpha)| {
            let cols = &bank[cell(l, alpha)];
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (g, &a) in grid.iter().enumerate() {
                let s = matched_score(&cols[g], &w.y);
                if better(s, best.0, a) {
                    best = (s, g);
                }
            }
            (l, alpha, best.1)
        })
        .collect();
    for _ in 0..REFINE_ROUNDS {
        let before = state.clone();
        for i in 0..state.len() {
            // with the other paths projected out, a candidate adds
            // |c'^H y|^2 / |c'|^2 to the joint projection energy
            let basis = orthonormal_basis(state.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &(l, alpha, g))| bank[cell(l, alpha)][g].as_slice()));
            let mut best = (f64::NEG_INFINITY, state[i]);
            for l in 0..=l_max {
                if state.iter().enumerate().any(|(j, s)| j != i && s.0 == l) {
                    continue;
                }
                for alpha in -(alpha_max as i64)..=alpha_max as i64 {
                    for (g, &a) in grid.iter().enumerate() {
                        let c = &bank[cell(l, alpha)][g];
                        let norm = inner(c, c).re;
                        let perp = deflate(c, &basis);
                        let perp_norm = inner(&perp, &perp).re;
                        // a candidate inside the span of the others adds nothing
                        let e = if perp_norm > 1e-10 * norm { inner(&perp, &w.y).norm_sqr() / perp_norm } else { f64::NEG_INFINITY };
                        if better(e, best.0, a) {
                            best = (e, (l, alpha, g));
                        }
                    }
                }
            }
            state[i] = best.1;
        }
        if state == before {
            break;
        }
    }
    let cols: Vec<Vec<Complex64>> = state.iter().map(|&(l, alpha, g)| bank[cell(l, alpha)][g].clone()).collect();
    let gains = joint_gains(&cols, w)?;
    let mut est: Vec<PathEstimate> = state
        .iter()
        .zip(gains)
        .map(|(&(l, alpha, g), gain)| PathEstimate { delay: l, doppler_int: alpha, doppler_frac: grid[g], gain })
        .collect();
    est.sort_by_key(|e| e.delay);
    Ok(est)
}

/// Exhaustive phase-1 search over all `p_paths`-tuples of `(l, α)` with
/// distinct delays, maximising the summed matched-filter scores. Only
/// practical for small `p_paths`.
pub fn exhaustive_phase_one(w: &EstimationWindow, p_paths: usize, l_max: usize, alpha_max: usize) -> Vec<(usize, i64)> {
    let cand = ranked_candidates(w, l_max, alpha_max);
    let mut best: (f64, Vec<(usize, i64)>) = (f64::NEG_INFINITY, Vec::new());
    let mut stack: Vec<usize> = Vec::new();
    fn rec(
        cand: &[(usize, i64, f64)],
        start: usize,
        need: usize,
        stack: &mut Vec<usize>,
        best: &mut (f64, Vec<(usize, i64)>),
    ) {
        if stack.len() == need {
            let s: f64 = stack.iter().map(|&i| cand[i].2).sum();
            if s > best.0 {
                *best = (s, stack.iter().map(|&i| (cand[i].0, cand[i].1)).collect());
            }
            return;
        }
        for i in start..cand.len() {
            if stack.iter().all(|&j| cand[j].0 != cand[i].0) {
                stack.push(i);
                rec(cand, i + 1, need, stack, best);
                stack.pop();
            }
        }
    }
    rec(&cand, 0, p_paths, &mut stack, &mut best);
    let mut out = best.1;
    out.sort();
    out
}
