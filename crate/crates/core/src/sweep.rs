//! Multichannel spectral sweep orchestration.
//!
//! Each grid frequency is planned, two cycles are acquired on the shared
//! reference and on every working channel, the first cycle is discarded, and
//! the second is reduced to an I/Q pair and then to an impedance point.
//! Frequencies are independent work items; every schedule yields the same
//! bits.

use rayon::prelude::*;

use crate::afe::{
    channel_stream, reference_amplitude, AdcSpec, ChannelConfig, DutModel, RandlesModel,
    RheostatSpec, RHEOSTAT_MAX_CODE,
};
use crate::dds::{reference_stream, ExcitationSpec, ReferenceNoise};
use crate::error::{Error, Result};
use crate::freq_plan::{plan_sampling, ClockConfig, SamplingPlan};
use crate::iq::{iq_from_sums, overflow_budget, IQAccumulator, QuarterIntegrator};
use crate::spectrum::{
    impedance_point, intermediary, CalibrationConfig, ChannelRole, SpectrumFlags, SpectrumPoint,
};

/// Cycles acquired per frequency; only the last is reduced.
pub const CYCLES_PER_POINT: usize = 2;
pub const MAX_CHANNELS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Strictly increasing test frequencies, Hz.
    pub grid: Vec<f64>,
    pub clocks: ClockConfig,
    pub adc: AdcSpec,
    pub rheostat: RheostatSpec,
    /// DDS output amplitude ahead of the reference stage, volts peak-to-peak.
    pub dds_vpp: f64,
    /// Input rheostat code of the reference stage.
    pub n_in: u32,
    pub v0: f64,
    /// Excitation initial phase, radians.
    pub phi: f64,
    pub v_mid: f64,
    pub channels: Vec<ChannelConfig>,
    pub cal: CalibrationConfig,
    /// Host-side time spent per frequency, seconds. A free parameter.
    pub controller_overhead_s: f64,
    pub reference_noise_rms: f64,
    pub reference_seed: u64,
}

impl SweepConfig {
    pub fn new(grid: Vec<f64>, channels: Vec<ChannelConfig>) -> Self {
        Self {
            grid,
            clocks: ClockConfig::default(),
            adc: AdcSpec::default(),
            rheostat: RheostatSpec::default(),
            dds_vpp: 1.0,
            n_in: 10,
            v0: 0.0,
            phi: 0.0,
            v_mid: 1.65,
            channels,
            cal: CalibrationConfig::default(),
            controller_overhead_s: 0.1,
            reference_noise_rms: 0.0,
            reference_seed: 0,
        }
    }

    /// Excitation seen by the DUTs, its amplitude set by the reference stage.
    pub fn excitation(&self) -> Result<ExcitationSpec> {
        let vpp = reference_amplitude(self.n_in, self.dds_vpp, &self.rheostat)?;
        Ok(ExcitationSpec {
            v0: self.v0,
            v1: vpp / 2.0,
            phi: self.phi,
            v_mid: self.v_mid,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.clocks.validate()?;
        self.adc.validate()?;
        self.rheostat.validate()?;
        self.cal.validate()?;
        self.excitation()?.validate(self.adc.v_dd)?;
        if self.n_in > RHEOSTAT_MAX_CODE {
            return Err(Error::Range(self.n_in as i64));
        }
        if !(self.dds_vpp >= 0.0) {
            return Err(Error::Config("DDS amplitude must be non-negative".into()));
        }
        if !(self.controller_overhead_s >= 0.0) || !(self.reference_noise_rms >= 0.0) {
            return Err(Error::Config(
                "overhead and reference noise must be non-negative".into(),
            ));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("frequency grid is empty".into()));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("frequency grid must be strictly increasing".into()));
        }
        for &f in &self.grid {
            self.clocks.check_band(f)?;
            let plan = plan_sampling(f, &self.clocks)?;
            let budget = overflow_budget(&plan, self.adc.bits);
            if !budget.fits {
                return Err(Error::Budget {
                    period: plan.period_f64(),
                    max_period: budget.max_period,
                });
            }
        }
        if self.channels.is_empty() || self.channels.len() > MAX_CHANNELS {
            return Err(Error::Config(format!(
                "need 1..={MAX_CHANNELS} working channels, got {}",
                self.channels.len()
            )));
        }
        let mut ids: Vec<u32> = self.channels.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate channel id {}", w[0])));
        }
        self.channels.iter().try_for_each(ChannelConfig::validate)
    }
}

/// `n` log-spaced frequencies from `f_lo` to `f_hi`, both endpoints exact.
pub fn log_grid(f_lo: f64, f_hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(f_lo > 0.0) || !(f_lo < f_hi) || !f_hi.is_finite() || n < 2 {
        return Err(Error::Config(format!(
            "degenerate grid ({f_lo}, {f_hi}, {n})"
        )));
    }
    let ratio = f_hi / f_lo;
    Ok((0..n)
        .map(|i| match i {
            0 => f_lo,
            i if i == n - 1 => f_hi,
            i => f_lo * ratio.powf(i as f64 / (n - 1) as f64),
        })
        .collect())
}

/// The 100-point, six-decade grid used by the bench protocols.
pub fn paper_grid() -> Vec<f64> {
    log_grid(0.05, 5e4, 100).expect("static grid")
}

fn randles_channels(parts: [(f64, f64, f64); 4]) -> Vec<ChannelConfig> {
    parts
        .iter()
        .enumerate()
        .map(|(i, &(r_s, r_f, c_dl))| {
            ChannelConfig::new(
                i as u32 + 1,
                DutModel::Randles(RandlesModel { r_s, r_f, c_dl }),
            )
        })
        .collect()
}

/// Four identical channels: 3.9 kOhm + (100 kOhm || 68 nF).
pub fn control_protocol() -> Vec<ChannelConfig> {
    randles_channels([(3.9e3, 100e3, 68e-9); 4])
}

/// Double-layer capacitance 68n/150n/330n/560n at R_F = 100 kOhm.
pub fn varying_cdl_protocol() -> Vec<ChannelConfig> {
    randles_channels([
        (3.9e3, 100e3, 68e-9),
        (3.9e3, 100e3, 150e-9),
        (3.9e3, 100e3, 330e-9),
        (3.9e3, 100e3, 560e-9),
    ])
}

/// Faradaic resistance 100k/53.6k/12k/3.9k at C_dl = 68 nF.
pub fn varying_rf_protocol() -> Vec<ChannelConfig> {
    randles_channels([
        (3.9e3, 100e3, 68e-9),
        (3.9e3, 53.6e3, 68e-9),
        (3.9e3, 12e3, 68e-9),
        (3.9e3, 3.9e3, 68e-9),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    Sequential,
    /// Frequencies on the current rayon pool.
    #[default]
    Parallel,
}

/// Per-frequency record of how the point was acquired.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyRecord {
    pub plan: SamplingPlan,
    pub frac_bits: u32,
    pub reference_iq: Option<IQAccumulator>,
    pub reference_clipped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepTiming {
    /// Two nominal periods per point plus overhead.
    pub nominal_s: f64,
    /// Samples actually acquired at the effective rates, plus overhead.
    pub modeled_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Ordered by frequency, then by channel in configuration order.
    pub points: Vec<SpectrumPoint>,
    pub frequencies: Vec<FrequencyRecord>,
    pub timing: SweepTiming,
    pub config: SweepConfig,
}

impl SweepResult {
    pub fn channel_points(&self, id: u32) -> Vec<SpectrumPoint> {
        self.points
            .iter()
            .filter(|p| p.channel_id == id)
            .copied()
            .collect()
    }
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    run_sweep_with(cfg, Schedule::default())
}

pub fn run_sweep_with(cfg: &SweepConfig, schedule: Schedule) -> Result<SweepResult> {
    cfg.validate()?;
    let exc = cfg.excitation()?;
    let measure = |(idx, &f): (usize, &f64)| measure_frequency(cfg, &exc, idx, f);
    let outcomes: Vec<Result<(FrequencyRecord, Vec<SpectrumPoint>)>> = match schedule {
        Schedule::Sequential => cfg.grid.iter().enumerate().map(measure).collect(),
        Schedule::Parallel => cfg.grid.par_iter().enumerate().map(measure).collect(),
    };

    let mut points = Vec::with_capacity(cfg.grid.len() * cfg.channels.len());
    let mut frequencies = Vec::with_capacity(cfg.grid.len());
    for outcome in outcomes {
        let (record, pts) = outcome?;
        frequencies.push(record);
        points.extend(pts);
    }
    let overhead = cfg.grid.len() as f64 * cfg.controller_overhead_s;
    let modeled_s = frequencies
        .iter()
        .map(|r| r.plan.acquisition_seconds(CYCLES_PER_POINT))
        .sum::<f64>()
        + overhead;
    Ok(SweepResult {
        points,
        frequencies,
        timing: SweepTiming {
            nominal_s: acquisition_time(cfg),
            modeled_s,
        },
        config: cfg.clone(),
    })
}

fn measure_frequency(
    cfg: &SweepConfig,
    exc: &ExcitationSpec,
    idx: usize,
    freq_hz: f64,
) -> Result<(FrequencyRecord, Vec<SpectrumPoint>)> {
    let plan = plan_sampling(freq_hz, &cfg.clocks)?;
    let frac_bits = overflow_budget(&plan, cfg.adc.bits).frac_bits;
    let integrator = QuarterIntegrator::new(&plan);
    let rate = plan.effective_rate_hz();
    let last = CYCLES_PER_POINT - 1;
    let stream_id = idx as u64;

    let reduce = |stream: &crate::afe::SampleStream| -> Result<IQAccumulator> {
        let sums = integrator.sums(stream.cycle(last)?, frac_bits)?;
        Ok(iq_from_sums(&sums, rate))
    };

    let noise = ReferenceNoise {
        rms: cfg.reference_noise_rms,
        seed: cfg.reference_seed,
        stream_id,
    };
    let ref_stream = reference_stream(exc, &plan, CYCLES_PER_POINT, &cfg.adc, Some(noise))?;
    let ref_iq = reduce(&ref_stream)?;
    let ref_clipped = ref_stream.cycle_clipped[last];
    let x_ref = intermediary(&ref_iq, ChannelRole::Reference).ok();
    drop(ref_stream);

    let mut points = Vec::with_capacity(cfg.channels.len());
    for ch in &cfg.channels {
        let mut flags = SpectrumFlags {
            overflow: ref_iq.overflow,
            clipped: ref_clipped,
            degenerate: false,
        };
        let mut point = SpectrumPoint {
            freq_hz,
            freq_actual_hz: plan.actual_hz,
            channel_id: ch.id,
            z_mag_raw: f64::NAN,
            z_mag_cal: f64::NAN,
            z_phase: f64::NAN,
            i_acc: f64::NAN,
            q_acc: f64::NAN,
            period_samples: plan.period_f64(),
            flags,
        };
        let stream = match channel_stream(
            ch,
            exc,
            &plan,
            CYCLES_PER_POINT,
            &cfg.rheostat,
            &cfg.adc,
            stream_id,
        ) {
            Ok(s) => s,
            Err(Error::Saturation { .. }) => {
                flags.clipped = true;
                flags.degenerate = true;
                point.flags = flags;
                points.push(point);
                continue;
            }
            Err(e) => return Err(e),
        };
        let iq = reduce(&stream)?;
        flags.clipped |= stream.cycle_clipped[last];
        flags.overflow |= iq.overflow;
        point.i_acc = iq.i_scaled;
        point.q_acc = iq.q_scaled;

        let estimate = x_ref.as_ref().and_then(|x_ref| {
            let x_ch = intermediary(&iq, ChannelRole::Working).ok()?;
            let r_out = ch.assumed_r_out(&cfg.rheostat).ok()?;
            impedance_point(x_ref, &x_ch, r_out, &cfg.cal).ok()
        });
        match estimate {
            Some(z) => {
                point.z_mag_raw = z.z_mag_raw;
                point.z_mag_cal = z.z_mag_cal;
                point.z_phase = z.z_phase;
            }
            None => flags.degenerate = true,
        }
        point.flags = flags;
        points.push(point);
    }

    let record = FrequencyRecord {
        plan,
        frac_bits,
        reference_iq: Some(ref_iq),
        reference_clipped: ref_clipped,
    };
    Ok((record, points))
}

/// Nominal acquisition time: two periods of every requested frequency plus
/// the per-point controller overhead.
pub fn acquisition_time(cfg: &SweepConfig) -> f64 {
    cfg.grid
        .iter()
        .map(|f| CYCLES_PER_POINT as f64 / f)
        .sum::<f64>()
        + cfg.grid.len() as f64 * cfg.controller_overhead_s
}

/// Number of channels whose I/Q pairs fit the link throughput once per second.
pub fn channel_capacity(throughput_bps: f64, pair_bytes: f64) -> Result<u64> {
    if !(throughput_bps > 0.0) || !(pair_bytes > 0.0) {
        return Err(Error::Config(
            "throughput and pair size must be positive".into(),
        ));
    }
    Ok((throughput_bps / pair_bytes).floor() as u64)
}
