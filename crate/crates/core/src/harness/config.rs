//! Flat TOML experiment configuration.
//!
//! Every key except `schema_version`, `n`, `alphabet` and `detector` has a
//! default. The canonical form is the TOML serialisation of the parsed
//! struct, so the hash does not depend on key order or comments in the file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ChannelPath, ChannelSpec, DelayPolicy, DopplerMode, LtvChannel};
use crate::daft::DaftParams;
use crate::detect::ML_BUDGET;
use crate::effective::{choose_c1, choose_c2, default_k_nu, guard_count, C2Mode};
use crate::modem::{Alphabet, AlphabetKind, FrameLayout};
use crate::{Complex64, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Waveform {
    Afdm,
    Ofdm,
    Ocdm,
}

impl Waveform {
    pub fn name(self) -> &'static str {
        match self {
            Waveform::Afdm => "afdm",
            Waveform::Ofdm => "ofdm",
            Waveform::Ocdm => "ocdm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Ml,
    Lmmse,
    MrcDfe,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Ml => "ml",
            DetectorKind::Lmmse => "lmmse",
            DetectorKind::MrcDfe => "mrc-dfe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    Random,
    /// Single unit-gain path with no delay or Doppler.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DopplerKind {
    IntegerUniform,
    Jakes,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayKind {
    Consecutive,
    DistinctRandom,
    Uniform,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum C2Key {
    Irrational,
    SmallRational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationKind {
    IdealCsi,
    Integer,
    Fractional,
}

impl EstimationKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimationKind::IdealCsi => "ideal-csi",
            EstimationKind::Integer => "integer",
            EstimationKind::Fractional => "fractional",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameKind {
    DataOnly,
    ZeroPadded,
    EmbeddedPilot,
}

/// Entries kept per path and column in the detector's channel model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandKind {
    /// `2 ξ_ν + 1`.
    Xi,
    /// `2 k_ν + 1`.
    KNu,
    /// Exact columns.
    Full,
}

fn d_waveform() -> Waveform {
    Waveform::Afdm
}
fn d_channel() -> ChannelKind {
    ChannelKind::Random
}
fn d_paths() -> usize {
    1
}
fn d_doppler() -> DopplerKind {
    DopplerKind::IntegerUniform
}
fn d_delays() -> DelayKind {
    DelayKind::Consecutive
}
fn d_c2() -> C2Key {
    C2Key::Irrational
}
fn d_snr() -> Vec<f64> {
    vec![0.0, 5.0, 10.0, 15.0, 20.0]
}
fn d_snr_p() -> f64 {
    35.0
}
fn d_trials() -> u64 {
    10_000
}
fn d_seed() -> u64 {
    1
}
fn d_estimation() -> EstimationKind {
    EstimationKind::IdealCsi
}
fn d_frame() -> FrameKind {
    FrameKind::DataOnly
}
fn d_band() -> BandKind {
    BandKind::Full
}
fn d_grid() -> f64 {
    1.0 / 64.0
}
fn d_n_iter() -> usize {
    20
}
fn d_true() -> bool {
    true
}
fn d_rank_budget() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub schema_version: u32,
    #[serde(default = "d_waveform")]
    pub waveform: Waveform,
    pub n: usize,
    pub alphabet: AlphabetKind,
    pub detector: DetectorKind,
    #[serde(default = "d_channel")]
    pub channel: ChannelKind,
    #[serde(default = "d_paths")]
    pub paths: usize,
    #[serde(default)]
    pub l_max: usize,
    #[serde(default)]
    pub alpha_max: usize,
    #[serde(default = "d_doppler")]
    pub doppler: DopplerKind,
    #[serde(default)]
    pub doppler_values: Vec<f64>,
    #[serde(default = "d_delays")]
    pub delays: DelayKind,
    #[serde(default)]
    pub delay_values: Vec<usize>,
    #[serde(default)]
    pub fractional: bool,
    #[serde(default = "d_c2")]
    pub c2_mode: C2Key,
    #[serde(default = "d_snr")]
    pub snr_db: Vec<f64>,
    #[serde(default = "d_snr_p")]
    pub snr_p_db: f64,
    #[serde(default = "d_trials")]
    pub trials: u64,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default)]
    pub xi_nu: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_nu: Option<usize>,
    #[serde(default = "d_estimation")]
    pub estimation: EstimationKind,
    #[serde(default = "d_frame")]
    pub frame: FrameKind,
    #[serde(default = "d_band")]
    pub band: BandKind,
    #[serde(default = "d_grid")]
    pub grid_resolution: f64,
    #[serde(default = "d_n_iter")]
    pub n_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// When false, `wall_ms` is written as 0 so output files are byte-stable.
    #[serde(default = "d_true")]
    pub record_timing: bool,
    /// Difference vectors per channel for the rank check when exhaustive
    /// enumeration does not fit.
    #[serde(default = "d_rank_budget")]
    pub rank_budget: u64,
}

impl SimConfig {
    /// Minimal valid configuration; the remaining fields take their defaults.
    pub fn new(n: usize, alphabet: AlphabetKind, detector: DetectorKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            waveform: d_waveform(),
            n,
            alphabet,
            detector,
            channel: d_channel(),
            paths: d_paths(),
            l_max: 0,
            alpha_max: 0,
            doppler: d_doppler(),
            doppler_values: Vec::new(),
            delays: d_delays(),
            delay_values: Vec::new(),
            fractional: false,
            c2_mode: d_c2(),
            snr_db: d_snr(),
            snr_p_db: d_snr_p(),
            trials: d_trials(),
            seed: d_seed(),
            xi_nu: 0,
            k_nu: None,
            estimation: d_estimation(),
            frame: d_frame(),
            band: d_band(),
            grid_resolution: d_grid(),
            n_iter: d_n_iter(),
            epsilon: None,
            record_timing: true,
            rank_budget: d_rank_budget(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// First 16 hex digits of the SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::new(self.alphabet)
    }

    pub fn k_nu(&self) -> usize {
        self.k_nu.unwrap_or_else(|| default_k_nu(self.n))
    }

    /// Guard count `Q` for guarded frames.
    pub fn q(&self) -> usize {
        guard_count(self.l_max, self.alpha_max, self.xi_nu)
    }

    pub fn params(&self) -> Result<DaftParams> {
        match self.waveform {
            Waveform::Afdm => DaftParams::new(
                self.n,
                choose_c1(self.alpha_max, self.xi_nu, self.n, self.fractional),
                choose_c2(
                    self.n,
                    match self.c2_mode {
                        C2Key::Irrational => C2Mode::Irrational,
                        C2Key::SmallRational => C2Mode::SmallRational,
                    },
                ),
            ),
            Waveform::Ofdm => DaftParams::ofdm(self.n),
            Waveform::Ocdm => DaftParams::ocdm(self.n),
        }
    }

    pub fn layout(&self) -> Result<FrameLayout> {
        match self.frame {
            FrameKind::DataOnly => Ok(FrameLayout::data_only(self.n)),
            FrameKind::ZeroPadded => FrameLayout::zero_padded(self.n, self.q(), self.alpha_max + self.xi_nu),
            FrameKind::EmbeddedPilot => FrameLayout::embedded_pilot(self.n, self.q()),
        }
    }

    /// Half-width of the per-path band in the detector model (`None` = exact).
    pub fn band_half_width(&self) -> Option<usize> {
        match self.band {
            BandKind::Xi => Some(self.xi_nu),
            BandKind::KNu => Some(self.k_nu()),
            BandKind::Full => None,
        }
    }

    pub fn channel_spec(&self) -> ChannelSpec {
        ChannelSpec {
            paths: self.paths,
            l_max: self.l_max,
            alpha_max: self.alpha_max,
            doppler: match self.doppler {
                DopplerKind::IntegerUniform => DopplerMode::IntegerUniform,
                DopplerKind::Jakes => DopplerMode::Jakes,
                DopplerKind::Fixed => DopplerMode::Fixed(self.doppler_values.clone()),
            },
            delays: match self.delays {
                DelayKind::Consecutive => DelayPolicy::Consecutive,
                DelayKind::DistinctRandom => DelayPolicy::DistinctRandom,
                DelayKind::Uniform => DelayPolicy::Uniform,
                DelayKind::Fixed => DelayPolicy::Fixed(self.delay_values.clone()),
            },
            fractional: self.fractional,
        }
    }

    pub fn identity_channel(&self) -> LtvChannel {
        LtvChannel::new(vec![ChannelPath::new(Complex64::new(1.0, 0.0), 0, 0.0)], self.n).expect("n >= 1")
    }

    /// `ε` of the DFE stopping rule, `1e-6 √K` unless set.
    pub fn epsilon(&self, data_len: usize) -> f64 {
        self.epsilon.unwrap_or(1e-6 * (data_len as f64).sqrt())
    }

    /// Checks that every module precondition can be met. Infeasible ML sizes
    /// are reported as [`Error::Capacity`].
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.n < 2 {
            return bad(format!("n = {} is too small", self.n));
        }
        if self.channel == ChannelKind::Random {
            self.channel_spec().validate(self.n)?;
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db must be a non-empty list of finite values".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.grid_resolution > 0.0 && self.grid_resolution <= 0.5) {
            return bad(format!("grid_resolution must lie in (0, 1/2], got {}", self.grid_resolution));
        }
        if self.n_iter == 0 {
            return bad("n_iter must be at least 1".into());
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return bad(format!("epsilon must be positive, got {e}"));
            }
        }
        if !self.snr_p_db.is_finite() {
            return bad("snr_p_db must be finite".into());
        }
        let layout = self.layout()?;
        if self.estimation != EstimationKind::IdealCsi {
            if self.frame != FrameKind::EmbeddedPilot {
                return bad("channel estimation needs frame = \"embedded-pilot\"".into());
            }
            if self.waveform != Waveform::Afdm {
                return bad("channel estimation is only defined for the afdm waveform".into());
            }
            if self.estimation == EstimationKind::Fractional && self.paths > self.l_max + 1 {
                return bad("fractional estimation needs distinct delays (paths <= l_max + 1)".into());
            }
        }
        if self.detector == DetectorKind::Ml {
            let k = layout.data_len() as u32;
            let size = self.alphabet().size() as u128;
            if size.checked_pow(k).is_none_or(|c| c > ML_BUDGET) {
                return Err(Error::Capacity(format!(
                    "ML over {k} symbols of a {size}-point alphabet exceeds the budget of {ML_BUDGET} candidates"
                )));
            }
        }
        Ok(())
    }
}
