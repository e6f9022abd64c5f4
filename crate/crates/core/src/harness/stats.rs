//! Summary statistics for BER curves.

use statrs::function::erf::erfc;

use crate::harness::sim::BerRecord;
use crate::{Error, Result};

/// Uncoded BPSK (and Gray QPSK per bit) BER in AWGN at `snr_db`, with
/// `SNR = E_s / N₀`: `Q(√(2 SNR)) = erfc(√SNR) / 2`.
pub fn awgn_bpsk_ber(snr_db: f64) -> f64 {
    let snr = 10f64.powf(snr_db / 10.0);
    0.5 * erfc(snr.sqrt())
}

/// Binomial standard deviation of an error-rate estimate over `n` bits.
pub fn binomial_sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// `[p̂ - kσ, p̂ + kσ]` of a record, with `σ` from the measured rate.
pub fn ber_interval(r: &BerRecord, k: f64) -> (f64, f64) {
    let s = binomial_sigma(r.ber, r.trials * r.bits_per_trial);
    (r.ber - k * s, r.ber + k * s)
}

/// Least-squares slope of `log10(BER)` against `log10(SNR)` over records
/// with `snr_lo_db <= snr_db <= snr_hi_db` and non-zero BER.
pub fn estimate_diversity_slope(records: &[BerRecord], snr_lo_db: f64, snr_hi_db: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.snr_db >= snr_lo_db && r.snr_db <= snr_hi_db && r.ber > 0.0)
        .map(|r| (r.snr_db / 10.0, r.ber.log10()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} usable points in [{snr_lo_db}, {snr_hi_db}] dB; need 2",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all usable points share one SNR".into()));
    }
    Ok(sxy / sxx)
}

/// SNR (dB) at which a BER curve crosses `target`, interpolating
/// `log10(BER)` linearly in dB between the bracketing points. Points must be
/// sorted by SNR; the first crossing is returned.
pub fn snr_at_ber(points: &[(f64, f64)], target: f64) -> Option<f64> {
    let lt = target.log10();
    points.windows(2).find_map(|w| {
        let (s0, b0) = w[0];
        let (s1, b1) = w[1];
        if b0 >= target && b1 <= target && b0 > 0.0 && b1 > 0.0 {
            let (l0, l1) = (b0.log10(), b1.log10());
            if l0 == l1 {
                return Some(s0);
            }
            Some(s0 + (lt - l0) * (s1 - s0) / (l1 - l0))
        } else {
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(snr_db: f64, ber: f64) -> BerRecord {
        BerRecord {
            config_hash: String::new(),
            waveform: "afdm".into(),
            detector: "ml".into(),
            snr_db,
            trials: 1,
            bit_errors: 0,
            ber,
            wall_ms: 0,
            bits_per_trial: 1,
        }
    }

    #[test]
    fn slopes_of_power_laws() {
        for order in [2.0, 3.0] {
            let r: Vec<BerRecord> = (0..6).map(|k| {
                let s = 10.0 + 2.0 * k as f64;
                rec(s, 0.3 * 10f64.powf(-order * s / 10.0))
            }).collect();
            assert!((estimate_diversity_slope(&r, 0.0, 100.0).unwrap() + order).abs() < 1e-12);
        }
    }

    #[test]
    fn slope_needs_two_points() {
        let r = vec![rec(10.0, 1e-3), rec(12.0, 0.0), rec(20.0, 1e-5)];
        assert!(matches!(estimate_diversity_slope(&r, 0.0, 15.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn awgn_reference_values() {
        let v = awgn_bpsk_ber(0.0);
        assert!((v - 0.078_649_603_525_142_57).abs() < 1e-10, "{v:e}");
        assert!(awgn_bpsk_ber(10.0) < 1e-5);
    }

    #[test]
    fn crossing_interpolation() {
        let pts = [(0.0, 1e-1), (10.0, 1e-3), (20.0, 1e-5)];
        assert!((snr_at_ber(&pts, 1e-2).unwrap() - 5.0).abs() < 1e-12);
        assert!((snr_at_ber(&pts, 1e-3).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(snr_at_ber(&pts, 1e-7), None);
    }
}
