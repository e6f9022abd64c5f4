//! Monte-Carlo trial pipeline.
//!
//! Each trial draws one channel, one bit sequence and one unit-variance
//! noise vector from its own random stream, then reuses them at every SNR
//! point with the noise scaled by `√N₀`. The pilot amplitude is
//! `√(SNR_p N₀)`, so the pilot-to-noise ratio is the same at every point.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{apply_channel_noiseless, random_channel, LtvChannel};
use crate::daft::DaftParams;
use crate::detect::{lmmse_detect, lmmse_time_domain, ExactGram, ml_detect_matrix, mrc_dfe_detect, spectral_radius, DfeConfig};
use crate::effective::EffectiveChannel;
use crate::estimate::{estimate_fractional, estimate_integer, estimates_to_channel, extract_window, PathEstimate};
use crate::harness::config::{BandKind, ChannelKind, DetectorKind, EstimationKind, FrameKind, SimConfig};
use crate::linalg::SparseColumns;
use crate::modem::{add_cpp, build_frame, demap_bits, demodulate, map_bits, modulate, strip_cpp, Alphabet, FrameLayout};
use crate::rng::{complex_gaussian_vec, stream_rng};
use crate::{CMatrix, Complex64, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// One row of a BER sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub config_hash: String,
    pub waveform: String,
    pub detector: String,
    pub snr_db: f64,
    pub trials: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub wall_ms: u64,
    /// Data bits per frame.
    pub bits_per_trial: u64,
}

/// One row of an estimation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRecord {
    pub config_hash: String,
    pub estimation: String,
    /// `ideal` or `estimated`.
    pub csi: String,
    pub snr_p_db: f64,
    pub snr_db: f64,
    pub trials: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// Fraction of trials whose path support was recovered; `None` for ideal CSI.
    pub support_recovered: Option<f64>,
    /// Pooled `Σ|ĥ - h|² / Σ|h|²` in dB; `None` for ideal CSI.
    pub gain_nmse_db: Option<f64>,
    /// Trials dropped because estimation failed.
    pub discarded: u64,
    pub wall_ms: u64,
    pub bits_per_trial: u64,
}

/// Everything a trial needs that does not change between trials.
struct Context {
    params: DaftParams,
    layout: FrameLayout,
    alphabet: Alphabet,
    data_idx: Vec<usize>,
    l_cp: usize,
    n0: Vec<f64>,
}

impl Context {
    fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = cfg.layout()?;
        Ok(Self {
            params: cfg.params()?,
            data_idx: layout.data_indices(),
            layout,
            alphabet: cfg.alphabet(),
            l_cp: if cfg.channel == ChannelKind::Identity { 0 } else { cfg.l_max },
            n0: cfg.snr_db.iter().map(|s| 10f64.powf(-s / 10.0)).collect(),
        })
    }
}

/// Channel model handed to a detector. Exact LMMSE on a data-only frame
/// runs in the time domain, where the channel has `P` entries per row; on a
/// guarded frame it uses the exact Gram matrix of the data columns.
struct Model {
    cols: SparseColumns,
    dense: Option<CMatrix>,
    pilot_col: Vec<(usize, Complex64)>,
    time: Option<LtvChannel>,
    exact: Option<ExactGram>,
}

impl Model {
    fn new(cfg: &SimConfig, ctx: &Context, ch: &LtvChannel) -> Result<Self> {
        let exact_lmmse = cfg.detector == DetectorKind::Lmmse && cfg.band == BandKind::Full;
        if exact_lmmse && cfg.frame == FrameKind::DataOnly {
            return Ok(Self {
                cols: SparseColumns::zeros(0, 0),
                dense: None,
                pilot_col: Vec::new(),
                time: Some(ch.clone()),
                exact: None,
            });
        }
        let heff = EffectiveChannel::new(ch, &ctx.params, cfg.k_nu(), cfg.xi_nu)?;
        let pilot_col = match ctx.layout.pilot_index() {
            Some(i) => heff.columns(&[i], None).col(0).to_vec(),
            None => Vec::new(),
        };
        if exact_lmmse {
            return Ok(Self {
                cols: SparseColumns::zeros(0, 0),
                dense: None,
                pilot_col,
                time: None,
                exact: Some(ExactGram::new(ch, &ctx.params, &ctx.data_idx)?),
            });
        }
        let (cols, dense) = if cfg.detector == DetectorKind::Ml {
            let c = heff.columns(&ctx.data_idx, None);
            let d = c.to_dense();
            (c, Some(d))
        } else {
            (heff.columns(&ctx.data_idx, cfg.band_half_width()), None)
        };
        Ok(Self { cols, dense, pilot_col, time: None, exact: None })
    }

    /// `r` is the received block without prefix, `y = A r`.
    fn detect(&self, cfg: &SimConfig, ctx: &Context, r: &[Complex64], y: &[Complex64], x_pilot: Complex64, n0: f64) -> Result<Vec<Complex64>> {
        let a = &ctx.alphabet;
        if let Some(ch) = &self.time {
            return Ok(lmmse_time_domain(r, ch, &ctx.params, 1.0 / n0)?.into_iter().map(|z| a.slice(z)).collect());
        }
        let mut y = y.to_vec();
        for &(r, v) in &self.pilot_col {
            y[r] -= v * x_pilot;
        }
        let gamma = 1.0 / n0;
        if let Some(g) = &self.exact {
            return Ok(g.lmmse(&y, gamma)?.into_iter().map(|z| a.slice(z)).collect());
        }
        match cfg.detector {
            DetectorKind::Ml => ml_detect_matrix(&y, self.dense.as_ref().expect("dense model for ML"), a),
            DetectorKind::Lmmse => Ok(lmmse_detect(&y, &self.cols, gamma)?.into_iter().map(|z| a.slice(z)).collect()),
            DetectorKind::MrcDfe => {
                let dfe = DfeConfig::new(gamma, cfg.n_iter, cfg.epsilon(ctx.data_idx.len()))?;
                Ok(mrc_dfe_detect(&y, &self.cols, &dfe, a)?.hard)
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
struct PointOutcome {
    ideal_errors: u64,
    est_errors: Option<u64>,
    support: bool,
    nmse_num: f64,
    nmse_den: f64,
}

fn count_errors(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

/// Support check and squared gain error. Integer estimates match truth by
/// `(l, α)`, fractional ones by delay with `|ν̂ - ν| <= 1/2`.
fn score_estimate(truth: &LtvChannel, est: &[PathEstimate], fractional: bool) -> (bool, f64, f64) {
    let den: f64 = truth.paths.iter().map(|p| p.gain.norm_sqr()).sum();
    let mut used = vec![false; est.len()];
    let mut num = 0.0;
    let mut all = est.len() == truth.paths.len();
    for p in &truth.paths {
        let hit = est.iter().enumerate().position(|(i, e)| {
            !used[i]
                && e.delay == p.delay
                && if fractional {
                    (e.doppler() - p.doppler).abs() <= 0.5
                } else {
                    e.doppler_int == p.doppler_int() && e.doppler_frac == 0.0
                }
        });
        match hit {
            Some(i) => {
                used[i] = true;
                num += (est[i].gain - p.gain).norm_sqr();
            }
            None => {
                all = false;
                num += p.gain.norm_sqr();
            }
        }
    }
    for (i, e) in est.iter().enumerate() {
        if !used[i] {
            num += e.gain.norm_sqr();
        }
    }
    (all, num, den)
}

/// Runs trial `t`; `None` per point marks a discarded estimation.
fn run_trial(cfg: &SimConfig, ctx: &Context, t: u64, with_ideal: bool) -> Result<Vec<Option<PointOutcome>>> {
    let mut rng = stream_rng(cfg.seed, t);
    let n = ctx.params.n;
    let ch = match cfg.channel {
        ChannelKind::Random => random_channel(&cfg.channel_spec(), n, &mut rng)?,
        ChannelKind::Identity => cfg.identity_channel(),
    };
    let nbits = ctx.data_idx.len() * ctx.alphabet.bits_per_symbol;
    let bits: Vec<u8> = (0..nbits).map(|_| rng.random_range(0..=1u8)).collect();
    let noise = complex_gaussian_vec(&mut rng, n + ctx.l_cp, 1.0);

    let data = map_bits(&bits, &ctx.alphabet)?;
    let frame = build_frame(&data, &ctx.layout, ZERO)?;
    let tx = add_cpp(&modulate(&frame, &ctx.params)?, ctx.l_cp, ctx.params.c1)?;
    let rx_data = apply_channel_noiseless(&tx, &ch)?;
    let rx_pilot = match ctx.layout.pilot_index() {
        Some(i) => {
            let mut e = vec![ZERO; n];
            e[i] = Complex64::new(1.0, 0.0);
            let tp = add_cpp(&modulate(&e, &ctx.params)?, ctx.l_cp, ctx.params.c1)?;
            Some(apply_channel_noiseless(&tp, &ch)?)
        }
        None => None,
    };

    let estimating = cfg.estimation != EstimationKind::IdealCsi;
    let ideal = if with_ideal || !estimating { Some(Model::new(cfg, ctx, &ch)?) } else { None };
    let snr_p = 10f64.powf(cfg.snr_p_db / 10.0);

    let mut out = Vec::with_capacity(ctx.n0.len());
    for &n0 in &ctx.n0 {
        let x_pilot = Complex64::new((snr_p * n0).sqrt(), 0.0);
        let sn = n0.sqrt();
        let r: Vec<Complex64> = (0..n + ctx.l_cp)
            .map(|k| {
                let p = rx_pilot.as_ref().map_or(ZERO, |rp| rp[k] * x_pilot);
                rx_data[k] + p + noise[k] * sn
            })
            .collect();
        let r = strip_cpp(&r, ctx.l_cp)?;
        let y = demodulate(&r, &ctx.params)?;
        let decide = |m: &Model| -> Result<u64> {
            let hard = m.detect(cfg, ctx, &r, &y, x_pilot, n0)?;
            Ok(count_errors(&demap_bits(&hard, &ctx.alphabet), &bits))
        };
        let mut point = PointOutcome::default();
        if let Some(m) = &ideal {
            point.ideal_errors = decide(m)?;
        }
        if estimating {
            let w = extract_window(&y, &ctx.layout, &ctx.params, cfg.alpha_max, cfg.xi_nu, x_pilot)?;
            let fractional = cfg.estimation == EstimationKind::Fractional;
            let est = if fractional {
                estimate_fractional(&w, cfg.paths, cfg.l_max, cfg.alpha_max, cfg.grid_resolution)
            } else {
                estimate_integer(&w, cfg.paths, cfg.l_max, cfg.alpha_max)
            };
            let est = match est {
                Ok(e) => e,
                Err(Error::Estimation(_)) => {
                    out.push(None);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let (support, num, den) = score_estimate(&ch, &est, fractional);
            point.support = support;
            point.nmse_num = num;
            point.nmse_den = den;
            let model = Model::new(cfg, ctx, &estimates_to_channel(&est, n)?)?;
            point.est_errors = Some(decide(&model)?);
        }
        out.push(Some(point));
    }
    Ok(out)
}

fn run_all(cfg: &SimConfig, ctx: &Context, with_ideal: bool) -> Result<Vec<Vec<Option<PointOutcome>>>> {
    (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, ctx, t, with_ideal)).collect()
}

fn elapsed_ms(cfg: &SimConfig, start: Instant) -> u64 {
    if cfg.record_timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

/// BER per SNR point. With channel estimation configured, detection uses the
/// estimated channel and trials whose estimation fails are not counted.
/// `wall_ms` is the duration of the whole sweep.
pub fn run_ber_sweep(cfg: &SimConfig) -> Result<Vec<BerRecord>> {
    let start = Instant::now();
    let ctx = Context::new(cfg)?;
    let results = run_all(cfg, &ctx, false)?;
    let wall = elapsed_ms(cfg, start);
    let bits = (ctx.data_idx.len() * ctx.alphabet.bits_per_symbol) as u64;
    let hash = cfg.hash();
    let estimating = cfg.estimation != EstimationKind::IdealCsi;
    Ok(cfg
        .snr_db
        .iter()
        .enumerate()
        .map(|(i, &snr)| {
            let mut trials = 0;
            let mut errors = 0;
            for p in results.iter().filter_map(|r| r[i].as_ref()) {
                trials += 1;
                errors += if estimating { p.est_errors.unwrap_or(0) } else { p.ideal_errors };
            }
            BerRecord {
                config_hash: hash.clone(),
                waveform: cfg.waveform.name().into(),
                detector: cfg.detector.name().into(),
                snr_db: snr,
                trials,
                bit_errors: errors,
                ber: if trials == 0 { f64::NAN } else { errors as f64 / (trials * bits) as f64 },
                wall_ms: wall,
                bits_per_trial: bits,
            }
        })
        .collect())
}

/// Ideal-CSI and estimated-CSI BER side by side, with estimation quality.
/// Both rows of a point use the same trials; trials whose estimation fails
/// are dropped from both.
pub fn run_estimation_sweep(cfg: &SimConfig) -> Result<Vec<EstimationRecord>> {
    if cfg.estimation == EstimationKind::IdealCsi {
        return Err(Error::Config("estimation sweep needs estimation = \"integer\" or \"fractional\"".into()));
    }
    let start = Instant::now();
    let ctx = Context::new(cfg)?;
    let results = run_all(cfg, &ctx, true)?;
    let wall = elapsed_ms(cfg, start);
    let bits = (ctx.data_idx.len() * ctx.alphabet.bits_per_symbol) as u64;
    let hash = cfg.hash();
    let mut out = Vec::with_capacity(2 * cfg.snr_db.len());
    for (i, &snr) in cfg.snr_db.iter().enumerate() {
        let kept: Vec<&PointOutcome> = results.iter().filter_map(|r| r[i].as_ref()).collect();
        let trials = kept.len() as u64;
        let discarded = cfg.trials - trials;
        let ideal: u64 = kept.iter().map(|p| p.ideal_errors).sum();
        let est: u64 = kept.iter().map(|p| p.est_errors.unwrap_or(0)).sum();
        let support = kept.iter().filter(|p| p.support).count() as f64 / trials.max(1) as f64;
        let num: f64 = kept.iter().map(|p| p.nmse_num).sum();
        let den: f64 = kept.iter().map(|p| p.nmse_den).sum();
        let ber = |e: u64| if trials == 0 { f64::NAN } else { e as f64 / (trials * bits) as f64 };
        let row = |csi: &str, errors: u64, s: Option<f64>, nmse: Option<f64>| EstimationRecord {
            config_hash: hash.clone(),
            estimation: cfg.estimation.name().into(),
            csi: csi.into(),
            snr_p_db: cfg.snr_p_db,
            snr_db: snr,
            trials,
            bit_errors: errors,
            ber: ber(errors),
            support_recovered: s,
            gain_nmse_db: nmse,
            discarded,
            wall_ms: wall,
            bits_per_trial: bits,
        };
        out.push(row("ideal", ideal, None, None));
        out.push(row("estimated", est, Some(support), Some(10.0 * (num / den).log10())));
    }
    Ok(out)
}

/// One row of a convergence report.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub channel_id: u64,
    pub snr_db: f64,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `‖x̂_DFE - x̂_LMMSE‖∞` at termination.
    pub lmmse_gap: f64,
    pub op_count: u64,
    /// Non-zeros per column of the detector model (maximum over columns).
    pub l: usize,
}

/// Spectral radius and DFE iteration count for `trials` channel draws at
/// every SNR point, on the detector model of the configured frame.
pub fn run_convergence_report(cfg: &SimConfig) -> Result<Vec<ConvergenceRow>> {
    let ctx = Context::new(cfg)?;
    let rows: Result<Vec<Vec<ConvergenceRow>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(cfg.seed, t);
            let ch = match cfg.channel {
                ChannelKind::Random => random_channel(&cfg.channel_spec(), ctx.params.n, &mut rng)?,
                ChannelKind::Identity => cfg.identity_channel(),
            };
            let nbits = ctx.data_idx.len() * ctx.alphabet.bits_per_symbol;
            let bits: Vec<u8> = (0..nbits).map(|_| rng.random_range(0..=1u8)).collect();
            let x = map_bits(&bits, &ctx.alphabet)?;
            let noise = complex_gaussian_vec(&mut rng, ctx.params.n, 1.0);
            let heff = EffectiveChannel::new(&ch, &ctx.params, cfg.k_nu(), cfg.xi_nu)?;
            let h = heff.columns(&ctx.data_idx, cfg.band_half_width());
            let l = (0..h.ncols()).map(|c| h.col(c).len()).max().unwrap_or(0);
            let hx = h.mul_vec(&x);
            let mut out = Vec::with_capacity(ctx.n0.len());
            for (&n0, &snr) in ctx.n0.iter().zip(&cfg.snr_db) {
                let y: Vec<Complex64> = hx.iter().zip(&noise).map(|(a, w)| a + w * n0.sqrt()).collect();
                let gamma = 1.0 / n0;
                let dfe = DfeConfig::new(gamma, cfg.n_iter, cfg.epsilon(ctx.data_idx.len()))?;
                let res = mrc_dfe_detect(&y, &h, &dfe, &ctx.alphabet)?;
                let lm = lmmse_detect(&y, &h, gamma)?;
                let gap = res.symbols.iter().zip(&lm).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                out.push(ConvergenceRow {
                    channel_id: t,
                    snr_db: snr,
                    rho: spectral_radius(&h, gamma)?,
                    iterations: res.iterations_used,
                    converged: res.final_delta < dfe.epsilon,
                    lmmse_gap: gap,
                    op_count: res.op_count,
                    l,
                });
            }
            Ok(out)
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}
