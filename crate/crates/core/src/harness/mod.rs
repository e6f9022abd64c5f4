//! Experiment runner: configuration, Monte-Carlo sweeps, statistics and CSV
//! output.

pub mod config;
pub mod sim;
pub mod stats;

use std::io::Write;

pub use config::SimConfig;
pub use sim::{run_ber_sweep, run_convergence_report, run_estimation_sweep, BerRecord, ConvergenceRow, EstimationRecord};
pub use stats::{awgn_bpsk_ber, estimate_diversity_slope, snr_at_ber};

use crate::Result;

pub const BER_HEADER: &str = "config_hash,waveform,detector,snr_db,trials,bit_errors,ber,wall_ms";
pub const ESTIMATION_HEADER: &str =
    "config_hash,estimation,csi,snr_p_db,snr_db,trials,bit_errors,ber,support_recovered,gain_nmse_db,discarded,wall_ms";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

pub fn write_ber_csv<W: Write>(mut w: W, records: &[BerRecord]) -> Result<()> {
    writeln!(w, "{BER_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{:e},{}",
            r.config_hash, r.waveform, r.detector, r.snr_db, r.trials, r.bit_errors, r.ber, r.wall_ms
        )?;
    }
    Ok(())
}

pub fn write_estimation_csv<W: Write>(mut w: W, records: &[EstimationRecord]) -> Result<()> {
    writeln!(w, "{ESTIMATION_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{:e},{},{},{},{}",
            r.config_hash,
            r.estimation,
            r.csi,
            r.snr_p_db,
            r.snr_db,
            r.trials,
            r.bit_errors,
            r.ber,
            opt(r.support_recovered),
            opt(r.gain_nmse_db),
            r.discarded,
            r.wall_ms
        )?;
    }
    Ok(())
}
