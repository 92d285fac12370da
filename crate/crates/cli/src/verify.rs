//! Comparison of a sweep against the analytic impedance of each channel.

use std::fmt::Write as _;

use hermeis_core::spectrum::wrap_degrees;
use hermeis_core::{SpectrumPoint, SweepConfig, SweepResult};

use crate::output::{format_g, sorted_points, SIG_DIGITS};
use crate::CliError;

/// Periods of at least this many samples get the tight per-point tolerance.
pub const WELL_SAMPLED_PERIOD: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub mag_rel: f64,
    pub phase_deg: f64,
    /// Per-point bounds for periods shorter than [`WELL_SAMPLED_PERIOD`].
    pub coarse_mag_rel: f64,
    pub coarse_phase_deg: f64,
    /// Median bounds over the whole grid, applied to quantized sweeps.
    pub median_mag_rel: f64,
    pub median_phase_deg: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mag_rel: 0.02,
            phase_deg: 2.0,
            coarse_mag_rel: 0.10,
            coarse_phase_deg: 5.0,
            median_mag_rel: 0.05,
            median_phase_deg: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointError {
    pub point: SpectrumPoint,
    pub z_true_mag: f64,
    pub z_true_phase: f64,
    pub mag_rel_err: f64,
    /// Absolute wrapped phase difference, degrees.
    pub phase_err_deg: f64,
    /// Whether this point meets its per-point bound; always true for
    /// quantized sweeps, which are judged on medians.
    pub within: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub count: usize,
    pub median_mag: f64,
    pub max_mag: f64,
    pub median_phase: f64,
    pub max_phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecadeSummary {
    /// `floor(log10 f)` of the requested frequency.
    pub decade: i32,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Ideal ADC: every point within its tiered bound.
    PerPoint,
    /// Quantized ADC: grid medians within bound.
    Median,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub records: Vec<PointError>,
    pub decades: Vec<DecadeSummary>,
    pub overall: Stats,
    pub mode: Mode,
    pub tolerances: Tolerances,
    pub passed: bool,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn stats(records: &[&PointError]) -> Stats {
    let mut mags: Vec<f64> = records.iter().map(|r| r.mag_rel_err).collect();
    let mut phases: Vec<f64> = records.iter().map(|r| r.phase_err_deg).collect();
    let max = |v: &[f64]| v.iter().copied().fold(f64::NAN, f64::max);
    Stats {
        count: records.len(),
        max_mag: max(&mags),
        max_phase: max(&phases),
        median_mag: median(&mut mags),
        median_phase: median(&mut phases),
    }
}

/// Relative magnitude error of the calibrated magnitude and absolute phase
/// error against `Z(f_q)` of every channel.
pub fn verify_sweep(result: &SweepResult, tol: &Tolerances) -> Result<RunReport, CliError> {
    let cfg: &SweepConfig = &result.config;
    let mode = if cfg.adc.ideal {
        Mode::PerPoint
    } else {
        Mode::Median
    };
    let mut records = Vec::with_capacity(result.points.len());
    for p in sorted_points(&result.points) {
        let ch = cfg
            .channels
            .iter()
            .find(|c| c.id == p.channel_id)
            .expect("point from a configured channel");
        let z = ch
            .dut
            .analytic(p.freq_actual_hz)
            .ok_or(CliError::MissingGroundTruth { channel: ch.id })?;
        let mag_rel_err = ((p.z_mag_cal - z.norm()) / z.norm()).abs();
        let z_true_phase = z.arg().to_degrees();
        let phase_err_deg = wrap_degrees(p.z_phase - z_true_phase).abs();
        let (mag_tol, phase_tol) = if p.period_samples >= WELL_SAMPLED_PERIOD {
            (tol.mag_rel, tol.phase_deg)
        } else {
            (tol.coarse_mag_rel, tol.coarse_phase_deg)
        };
        // NaN errors (degenerate points) fail both comparisons
        let within = match mode {
            Mode::PerPoint => mag_rel_err <= mag_tol && phase_err_deg <= phase_tol,
            Mode::Median => mag_rel_err.is_finite() && phase_err_deg.is_finite(),
        };
        records.push(PointError {
            point: p,
            z_true_mag: z.norm(),
            z_true_phase,
            mag_rel_err,
            phase_err_deg,
            within,
        });
    }

    let mut decades: Vec<DecadeSummary> = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let decade = records[start].point.freq_hz.log10().floor() as i32;
        let end = records[start..]
            .iter()
            .position(|r| r.point.freq_hz.log10().floor() as i32 != decade)
            .map_or(records.len(), |k| start + k);
        let group: Vec<&PointError> = records[start..end].iter().collect();
        decades.push(DecadeSummary {
            decade,
            stats: stats(&group),
        });
        start = end;
    }
    let all: Vec<&PointError> = records.iter().collect();
    let overall = stats(&all);

    let points_ok = !records.is_empty() && records.iter().all(|r| r.within);
    let passed = match mode {
        Mode::PerPoint => points_ok,
        Mode::Median => {
            points_ok
                && overall.median_mag <= tol.median_mag_rel
                && overall.median_phase <= tol.median_phase_deg
        }
    };
    Ok(RunReport {
        records,
        decades,
        overall,
        mode,
        tolerances: *tol,
        passed,
    })
}

pub const REPORT_HEADER: &str = "freq_hz,freq_actual_hz,channel,period_samples,zmag_ohm_cal,zphase_deg,zmag_true_ohm,zphase_true_deg,mag_rel_err,phase_err_deg,within";

pub fn report_csv(report: &RunReport) -> String {
    let g = |x: f64| format_g(x, SIG_DIGITS);
    let mut out = String::new();
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for r in &report.records {
        let p = &r.point;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            g(p.freq_hz),
            g(p.freq_actual_hz),
            p.channel_id,
            g(p.period_samples),
            g(p.z_mag_cal),
            g(p.z_phase),
            g(r.z_true_mag),
            g(r.z_true_phase),
            g(r.mag_rel_err),
            g(r.phase_err_deg),
            r.within as u8,
        )
        .expect("writing to a String");
    }
    out
}

/// Human-readable per-decade table and verdict.
pub fn summary_text(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>8} {:>6} {:>12} {:>12} {:>12} {:>12}",
        "decade", "points", "med |Z| err", "max |Z| err", "med ph err", "max ph err"
    );
    let row = |out: &mut String, label: &str, s: &Stats| {
        let _ = writeln!(
            out,
            "{:>8} {:>6} {:>11.4}% {:>11.4}% {:>11.4}° {:>11.4}°",
            label,
            s.count,
            100.0 * s.median_mag,
            100.0 * s.max_mag,
            s.median_phase,
            s.max_phase
        );
    };
    for d in &report.decades {
        row(&mut out, &format!("1e{}", d.decade), &d.stats);
    }
    row(&mut out, "all", &report.overall);
    let t = &report.tolerances;
    let rule = match report.mode {
        Mode::PerPoint => format!(
            "per point: {}% / {}° for P >= {WELL_SAMPLED_PERIOD}, {}% / {}° below",
            100.0 * t.mag_rel,
            t.phase_deg,
            100.0 * t.coarse_mag_rel,
            t.coarse_phase_deg
        ),
        Mode::Median => format!(
            "grid median: {}% / {}°",
            100.0 * t.median_mag_rel,
            t.median_phase_deg
        ),
    };
    let failing = report.records.iter().filter(|r| !r.within).count();
    let _ = writeln!(
        out,
        "{} ({rule}; {failing} point(s) out of bound)",
        if report.passed { "PASS" } else { "FAIL" }
    );
    out
}
