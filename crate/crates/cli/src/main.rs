use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hermeis_cli::verify::{report_csv, summary_text};
use hermeis_cli::{
    parse_config, plan_text, spectrum_csv, sweep_summary, verify_sweep, write_file, Tolerances,
};
use hermeis_core::{channel_capacity, run_sweep, AdcSpec, ClockConfig};

#[derive(Parser)]
#[command(name = "hermeis", version, about = "Single-cycle I/Q impedance spectroscopy simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Show the acquisition plan for one frequency under the default clocks.
    Plan {
        /// Test frequency, Hz.
        freq: f64,
        /// Read clocks and ADC width from this configuration instead.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a sweep and write the spectrum CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a sweep, compare against the analytic impedance and write a report CSV.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Channels whose I/Q pairs fit the link once per second.
    Capacity {
        /// Link throughput, bytes per second.
        #[arg(long)]
        throughput: f64,
        /// Bytes per I/Q pair.
        #[arg(long)]
        pair_bytes: f64,
    },
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Plan { freq, config } => {
            let (clocks, bits) = match config {
                Some(path) => {
                    let cfg = parse_config(&path)?;
                    (cfg.clocks, cfg.adc.bits)
                }
                None => (ClockConfig::default(), AdcSpec::default().bits),
            };
            print!("{}", plan_text(freq, &clocks, bits)?);
        }
        Command::Sweep { config, out } => {
            let cfg = parse_config(&config)?;
            let result = run_sweep(&cfg).context("sweep failed")?;
            write_file(&out, &spectrum_csv(&result.points))?;
            print!("{}", sweep_summary(&result));
        }
        Command::Verify { config, out } => {
            let cfg = parse_config(&config)?;
            let result = run_sweep(&cfg).context("sweep failed")?;
            let report = verify_sweep(&result, &Tolerances::default())?;
            write_file(&out, &report_csv(&report))?;
            print!("{}", summary_text(&report));
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Capacity {
            throughput,
            pair_bytes,
        } => println!("{}", channel_capacity(throughput, pair_bytes)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
