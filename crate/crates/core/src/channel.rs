//! Linear time-varying (delay-Doppler) channel.
//!
//! Path `i` has complex gain `h_i`, integer delay `l_i` and normalised Doppler
//! `ν_i = N f_i` (in subcarrier spacings). The time-domain response is
//! `r[n] = Σ_i h_i exp(-j2π ν_i n / N) s[n - l_i] + w[n]`, with `n = 0` the
//! first sample after the prefix.

use std::f64::consts::PI;

use rand::Rng;

use crate::daft::{cis_turns, DaftParams};
use crate::linalg::SparseColumns;
use crate::rng::complex_gaussian;
use crate::{CMatrix, Complex64, Error, Result};

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPath {
    pub gain: Complex64,
    pub delay: usize,
    /// Normalised Doppler `ν = α + a`.
    pub doppler: f64,
}

impl ChannelPath {
    pub fn new(gain: Complex64, delay: usize, doppler: f64) -> Self {
        Self { gain, delay, doppler }
    }

    /// Integer part `α`, chosen so that the fractional part lies in `(-1/2, 1/2]`.
    pub fn doppler_int(&self) -> i64 {
        (self.doppler - 0.5).ceil() as i64
    }

    /// Fractional part `a ∈ (-1/2, 1/2]`.
    pub fn doppler_frac(&self) -> f64 {
        self.doppler - self.doppler_int() as f64
    }

    pub fn is_integer_doppler(&self) -> bool {
        self.doppler_frac() == 0.0
    }
}

/// A channel realisation for frames of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvChannel {
    pub paths: Vec<ChannelPath>,
    pub n: usize,
}

impl LtvChannel {
    pub fn new(paths: Vec<ChannelPath>, n: usize) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::Config("a channel needs at least one path".into()));
        }
        if let Some(p) = paths.iter().find(|p| p.delay >= n) {
            return Err(Error::Config(format!("path delay {} must be below N = {n}", p.delay)));
        }
        if let Some(p) = paths.iter().find(|p| !p.doppler.is_finite() || !p.gain.re.is_finite() || !p.gain.im.is_finite()) {
            return Err(Error::Config(format!("non-finite path parameters: {p:?}")));
        }
        Ok(Self { paths, n })
    }

    pub fn max_delay(&self) -> usize {
        self.paths.iter().map(|p| p.delay).max().unwrap_or(0)
    }

    pub fn is_integer_doppler(&self) -> bool {
        self.paths.iter().all(ChannelPath::is_integer_doppler)
    }
}

/// Noiseless channel output for a prefixed block. Sample `k` of `s_cp` is
/// time index `k - l_cp`; samples whose delayed input would precede the
/// prefix see zero input.
pub fn apply_channel_noiseless(s_cp: &[Complex64], ch: &LtvChannel) -> Result<Vec<Complex64>> {
    let n = ch.n;
    if s_cp.len() < n {
        return Err(Error::Dimension { expected: n, actual: s_cp.len() });
    }
    let l_cp = s_cp.len() - n;
    if l_cp < ch.max_delay() {
        return Err(Error::Config(format!(
            "prefix of {l_cp} samples is shorter than the maximum delay {}",
            ch.max_delay()
        )));
    }
    let mut r = vec![Complex64::new(0.0, 0.0); s_cp.len()];
    for path in &ch.paths {
        let f = path.doppler / n as f64;
        for (k, out) in r.iter_mut().enumerate().skip(path.delay) {
            let t = k as f64 - l_cp as f64;
            *out += path.gain * cis_turns(-f * t) * s_cp[k - path.delay];
        }
    }
    Ok(r)
}

/// Channel output with additive `CN(0, noise_var)` noise on every sample.
pub fn apply_channel<R: Rng + ?Sized>(
    s_cp: &[Complex64],
    ch: &LtvChannel,
    noise_var: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if !(noise_var >= 0.0) {
        return Err(Error::Config(format!("noise variance must be non-negative, got {noise_var}")));
    }
    let mut r = apply_channel_noiseless(s_cp, ch)?;
    if noise_var > 0.0 {
        for v in r.iter_mut() {
            *v += complex_gaussian(rng, noise_var);
        }
    }
    Ok(r)
}

/// Diagonal of `Γ_CPP` for a path of delay `l`.
pub fn cpp_phase(l: usize, n: usize, c1: f64) -> Vec<Complex64> {
    let nf = n as f64;
    (0..n)
        .map(|k| {
            if k < l {
                cis_turns(-c1 * (nf * nf - 2.0 * nf * (l - k) as f64))
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .collect()
}

/// Non-zeros of `Σ h_i Γ_i Δ_i Π^{l_i}`, the matrix acting on the
/// prefix-stripped block: entry `(k, (k - l_i) mod N)` per path.
fn time_entries<'a>(ch: &'a LtvChannel, p: &DaftParams) -> impl Iterator<Item = (usize, usize, Complex64)> + 'a {
    let n = p.n;
    let c1 = p.c1;
    ch.paths.iter().flat_map(move |path| {
        let gamma = cpp_phase(path.delay, n, c1);
        let f = path.doppler / n as f64;
        (0..n).map(move |k| {
            let col = (k + n - path.delay) % n;
            (k, col, path.gain * gamma[k] * cis_turns(-f * k as f64))
        })
    })
}

/// Dense time-domain channel matrix `H = Σ h_i Γ_CPP,i Δ_i Π^{l_i}`.
pub fn time_channel_matrix(ch: &LtvChannel, p: &DaftParams) -> CMatrix {
    let mut h = CMatrix::zeros(p.n, p.n);
    for (r, c, v) in time_entries(ch, p) {
        h[(r, c)] += v;
    }
    h
}

/// `H` in column-sparse form, `P` entries per row.
pub fn time_channel_sparse(ch: &LtvChannel, p: &DaftParams) -> SparseColumns {
    let mut m = SparseColumns::zeros(p.n, p.n);
    for (r, c, v) in time_entries(ch, p) {
        m.add(r, c, v);
    }
    m
}

/// How per-path normalised Doppler values are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum DopplerMode {
    /// `α` uniform over `{-α_max, …, α_max}`.
    IntegerUniform,
    /// `ν = α_max cos θ`, `θ ~ U[-π, π]`.
    Jakes,
    /// Caller-supplied values, one per path.
    Fixed(Vec<f64>),
}

/// How path delays are assigned.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayPolicy {
    /// Delays `0, 1, …, P-1`.
    Consecutive,
    /// `P` distinct delays drawn uniformly from `0..=l_max`.
    DistinctRandom,
    /// Independent uniform delays; paths may share a tap.
    Uniform,
    /// Caller-supplied delays, one per path.
    Fixed(Vec<usize>),
}

/// Parameters of the random channel generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub paths: usize,
    pub l_max: usize,
    pub alpha_max: usize,
    pub doppler: DopplerMode,
    pub delays: DelayPolicy,
    /// When false, Jakes draws are rounded to the nearest integer.
    pub fractional: bool,
}

impl ChannelSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::Config("at least one path is required".into()));
        }
        if self.l_max >= n {
            return Err(Error::Config(format!("l_max = {} must be below N = {n}", self.l_max)));
        }
        match &self.delays {
            DelayPolicy::Consecutive | DelayPolicy::DistinctRandom if self.paths > self.l_max + 1 => {
                return Err(Error::Config(format!(
                    "{} distinct delays do not fit in 0..={}",
                    self.paths, self.l_max
                )))
            }
            DelayPolicy::Fixed(d) if d.len() != self.paths => {
                return Err(Error::Config(format!("expected {} fixed delays, got {}", self.paths, d.len())))
            }
            DelayPolicy::Fixed(d) if d.iter().any(|&l| l > self.l_max) => {
                return Err(Error::Config(format!("fixed delays {d:?} exceed l_max = {}", self.l_max)))
            }
            _ => {}
        }
        if let DopplerMode::Fixed(v) = &self.doppler {
            if v.len() != self.paths {
                return Err(Error::Config(format!("expected {} fixed Doppler values, got {}", self.paths, v.len())));
            }
        }
        Ok(())
    }
}

/// Draw a channel: gains `CN(0, 1/P)`, delays and Doppler per `spec`.
pub fn random_channel<R: Rng + ?Sized>(spec: &ChannelSpec, n: usize, rng: &mut R) -> Result<LtvChannel> {
    spec.validate(n)?;
    let p = spec.paths;
    let delays: Vec<usize> = match &spec.delays {
        DelayPolicy::Consecutive => (0..p).collect(),
        DelayPolicy::DistinctRandom => {
            let mut pool: Vec<usize> = (0..=spec.l_max).collect();
            // partial Fisher-Yates
            for i in 0..p {
                let j = rng.random_range(i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(p);
            pool
        }
        DelayPolicy::Uniform => (0..p).map(|_| rng.random_range(0..=spec.l_max)).collect(),
        DelayPolicy::Fixed(d) => d.clone(),
    };
    let amax = spec.alpha_max as i64;
    let dopplers: Vec<f64> = match &spec.doppler {
        DopplerMode::IntegerUniform => (0..p).map(|_| rng.random_range(-amax..=amax) as f64).collect(),
        DopplerMode::Jakes => (0..p)
            .map(|_| {
                let theta = rng.random_range(-PI..PI);
                let nu = spec.alpha_max as f64 * theta.cos();
                if spec.fractional {
                    nu
                } else {
                    nu.round()
                }
            })
            .collect(),
        DopplerMode::Fixed(v) => v.clone(),
    };
    let var = 1.0 / p as f64;
    let paths = delays
        .into_iter()
        .zip(dopplers)
        .map(|(l, nu)| ChannelPath::new(complex_gaussian(rng, var), l, nu))
        .collect();
    LtvChannel::new(paths, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ramp(len: usize) -> Vec<Complex64> {
        (0..len).map(|k| c(k as f64 + 1.0, 0.5 * k as f64)).collect()
    }

    #[test]
    fn doppler_split() {
        let p = |nu| ChannelPath::new(c(1.0, 0.0), 0, nu);
        assert_eq!(p(1.5).doppler_int(), 1);
        assert!((p(1.5).doppler_frac() - 0.5).abs() < 1e-15);
        assert_eq!(p(-0.5).doppler_int(), -1);
        assert!((p(-0.5).doppler_frac() - 0.5).abs() < 1e-15);
        assert_eq!(p(-1.3).doppler_int(), -1);
        assert_eq!(p(2.0).doppler_int(), 2);
        assert!(p(2.0).is_integer_doppler());
    }

    #[test]
    fn identity_and_delay() {
        let s = ramp(10);
        let id = LtvChannel::new(vec![ChannelPath::new(c(1.0, 0.0), 0, 0.0)], 8).unwrap();
        let mut rng = stream_rng(0, 0);
        assert_eq!(apply_channel(&s, &id, 0.0, &mut rng).unwrap(), s);

        let d2 = LtvChannel::new(vec![ChannelPath::new(c(1.0, 0.0), 2, 0.0)], 8).unwrap();
        let r = apply_channel(&s, &d2, 0.0, &mut rng).unwrap();
        for k in 2..10 {
            assert_eq!(r[k], s[k - 2]);
        }
    }

    #[test]
    fn short_prefix_is_rejected() {
        let ch = LtvChannel::new(vec![ChannelPath::new(c(1.0, 0.0), 3, 0.0)], 8).unwrap();
        let err = apply_channel_noiseless(&ramp(10), &ch).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn cpp_phase_identity_condition() {
        // 2 N c1 = 3 and N even
        for l in 0..4 {
            for g in cpp_phase(l, 16, 3.0 / 32.0) {
                assert!((g - c(1.0, 0.0)).norm() < 1e-12);
            }
        }
        // N odd breaks the identity
        let g = cpp_phase(2, 15, 3.0 / 30.0);
        assert!((g[0] - c(1.0, 0.0)).norm() > 1e-3);
    }

    #[test]
    fn single_path_matrix_is_identity() {
        let p = DaftParams::new(8, 0.07, 0.01).unwrap();
        let ch = LtvChannel::new(vec![ChannelPath::new(c(1.0, 0.0), 0, 0.0)], 8).unwrap();
        assert_eq!(time_channel_matrix(&ch, &p), CMatrix::identity(8, 8));
    }

    #[test]
    fn spec_validation() {
        let spec = ChannelSpec {
            paths: 4,
            l_max: 2,
            alpha_max: 1,
            doppler: DopplerMode::IntegerUniform,
            delays: DelayPolicy::Consecutive,
            fractional: false,
        };
        let mut rng = stream_rng(0, 0);
        assert!(matches!(random_channel(&spec, 16, &mut rng), Err(Error::Config(_))));
        let spec = ChannelSpec { l_max: 16, paths: 1, ..spec };
        assert!(random_channel(&spec, 16, &mut rng).is_err());
    }

    #[test]
    fn jakes_bound_and_fixed_passthrough() {
        let mut rng = stream_rng(3, 0);
        let spec = ChannelSpec {
            paths: 3,
            l_max: 2,
            alpha_max: 2,
            doppler: DopplerMode::Jakes,
            delays: DelayPolicy::DistinctRandom,
            fractional: true,
        };
        for _ in 0..1000 {
            let ch = random_channel(&spec, 64, &mut rng).unwrap();
            assert!(ch.paths.iter().all(|p| p.doppler.abs() <= 2.0));
            let mut d: Vec<_> = ch.paths.iter().map(|p| p.delay).collect();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), 3);
        }
        let spec = ChannelSpec {
            doppler: DopplerMode::Fixed(vec![0.25, -1.0, 2.0]),
            delays: DelayPolicy::Fixed(vec![2, 0, 1]),
            ..spec
        };
        let ch = random_channel(&spec, 64, &mut rng).unwrap();
        let got: Vec<_> = ch.paths.iter().map(|p| (p.delay, p.doppler)).collect();
        assert_eq!(got, vec![(2, 0.25), (0, -1.0), (1, 2.0)]);
    }

    #[test]
    fn unit_path_gain_power() {
        let mut rng = stream_rng(11, 0);
        let spec = ChannelSpec {
            paths: 1,
            l_max: 0,
            alpha_max: 0,
            doppler: DopplerMode::IntegerUniform,
            delays: DelayPolicy::Consecutive,
            fractional: false,
        };
        let draws = 100_000;
        let mean: f64 = (0..draws)
            .map(|_| random_channel(&spec, 4, &mut rng).unwrap().paths[0].gain.norm_sqr())
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn noise_variance() {
        let ch = LtvChannel::new(vec![ChannelPath::new(c(0.0, 0.0), 0, 0.0)], 8).unwrap();
        let s = vec![c(0.0, 0.0); 8 + 100_000];
        let ch = LtvChannel { n: s.len(), ..ch };
        let mut rng = stream_rng(5, 1);
        let r = apply_channel(&s, &ch, 0.3, &mut rng).unwrap();
        let var = r.iter().map(|z| z.norm_sqr()).sum::<f64>() / r.len() as f64;
        assert!((var - 0.3).abs() / 0.3 < 0.02, "{var}");
    }
}
