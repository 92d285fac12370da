//! Command-line front end: configuration files, sweep CSVs, verification
//! reports and plan inspection.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod verify;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hermeis_core::iq::overflow_budget;
use hermeis_core::{plan_sampling, ClockConfig, SweepConfig, SweepResult};

pub use config::{parse_config, parse_config_str};
pub use output::{format_g, parse_spectrum_csv, spectrum_csv, SpectrumRow};
pub use verify::{verify_sweep, RunReport, Tolerances};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("line {line}: {key}: {message}")]
    Parse {
        line: usize,
        key: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("channel {channel} has no analytic impedance to verify against")]
    MissingGroundTruth { channel: u32 },
    #[error(transparent)]
    Core(#[from] hermeis_core::Error),
}

/// Printable acquisition plan for one frequency.
pub fn plan_text(freq_hz: f64, clocks: &ClockConfig, adc_bits: u32) -> Result<String, CliError> {
    let plan = plan_sampling(freq_hz, clocks)?;
    let budget = overflow_budget(&plan, adc_bits);
    let mut out = String::new();
    let g = |x: f64| format_g(x, 9);
    let mut line = |label: &str, value: String| {
        let _ = writeln!(out, "{label:<18}{value}");
    };
    line("requested", format!("{} Hz", g(freq_hz)));
    line("fcw m", plan.fcw.to_string());
    line("f_q", format!("{} Hz", g(plan.actual_hz)));
    line("adaptive f_s'", format!("{} Hz", g(plan.adaptive_rate_hz)));
    line("samples/period", plan.nominal_samples.to_string());
    line("divider k", plan.divider.to_string());
    line("effective f_s", format!("{} Hz", g(plan.effective_rate_hz())));
    line("rate error", format!("{} Hz", g(plan.rate_error_hz)));
    line(
        "period P",
        format!(
            "{} samples ({}/{})",
            g(plan.period_f64()),
            plan.period.numer(),
            plan.period.denom()
        ),
    );
    line("cycle length", plan.cycle_len.to_string());
    line(
        "overflow budget",
        format!(
            "F = {} fractional bits, P <= {} ({})",
            budget.frac_bits,
            g(budget.max_period),
            if budget.fits { "fits" } else { "exceeds 32-bit accumulator" }
        ),
    );
    Ok(out)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Short description of a finished sweep.
pub fn sweep_summary(result: &SweepResult) -> String {
    let cfg: &SweepConfig = &result.config;
    let count = |f: fn(&hermeis_core::SpectrumPoint) -> bool| {
        result.points.iter().filter(|p| f(p)).count()
    };
    format!(
        "{} points ({} frequencies x {} channels); clipped {}, overflow {}, degenerate {}\n\
         modeled acquisition {} s (nominal {} s)\n",
        result.points.len(),
        cfg.grid.len(),
        cfg.channels.len(),
        count(|p| p.flags.clipped),
        count(|p| p.flags.overflow),
        count(|p| p.flags.degenerate),
        format_g(result.timing.modeled_s, 6),
        format_g(result.timing.nominal_s, 6),
    )
}
