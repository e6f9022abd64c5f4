//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 infeasible detector. `AFDM_WORKERS` sets the worker thread count.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use afdm::analysis::min_rank_over_deltas;
use afdm::channel::random_channel;
use afdm::harness::config::ChannelKind;
use afdm::harness::{
    run_ber_sweep, run_convergence_report, run_estimation_sweep, write_ber_csv, write_estimation_csv, SimConfig,
};
use afdm::rng::stream_rng;
use afdm::{Error, Result};

#[derive(Parser)]
#[command(name = "afdm", version, about = "AFDM link-level simulator")]
struct Cli {
    /// Override the master seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// BER sweep, written as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ideal versus estimated CSI, written as CSV.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimum rank of Φ(δ) for `trials` random channels.
    DiversityCheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Spectral radius and DFE iterations for `trials` random channels.
    ConvergenceCheck {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<SimConfig> {
    let mut cfg = SimConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = load(&config, cli.seed)?;
            let records = run_ber_sweep(&cfg)?;
            write_ber_csv(BufWriter::new(File::create(out)?), &records)
        }
        Command::Estimate { config, out } => {
            let cfg = load(&config, cli.seed)?;
            let records = run_estimation_sweep(&cfg)?;
            write_estimation_csv(BufWriter::new(File::create(out)?), &records)
        }
        Command::DiversityCheck { config } => {
            let cfg = load(&config, cli.seed)?;
            let params = cfg.params()?;
            let alphabet = cfg.alphabet();
            println!("channel_id,paths,min_rank,exhaustive,evaluated");
            let mut overall = usize::MAX;
            for t in 0..cfg.trials {
                let ch = match cfg.channel {
                    ChannelKind::Random => random_channel(&cfg.channel_spec(), cfg.n, &mut stream_rng(cfg.seed, t))?,
                    ChannelKind::Identity => cfg.identity_channel(),
                };
                let r = min_rank_over_deltas(&ch, &params, &alphabet, cfg.rank_budget, cfg.seed ^ t)?;
                overall = overall.min(r.min_rank);
                println!("{t},{},{},{},{}", ch.paths.len(), r.min_rank, r.exhaustive, r.evaluated);
            }
            println!("# minimum rank over all channels: {overall}");
            Ok(())
        }
        Command::ConvergenceCheck { config } => {
            let cfg = load(&config, cli.seed)?;
            let rows = run_convergence_report(&cfg)?;
            println!("channel_id,snr_db,rho,iterations,converged,lmmse_gap");
            for r in &rows {
                println!("{},{},{:.9},{},{},{:e}", r.channel_id, r.snr_db, r.rho, r.iterations, r.converged, r.lmmse_gap);
            }
            let worst = rows.iter().map(|r| r.rho).fold(0.0, f64::max);
            println!("# largest spectral radius: {worst:.9}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("AFDM_WORKERS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the worker pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Dimension { .. } => 2,
                Error::Capacity(_) => 3,
                _ => 1,
            })
        }
    }
}
