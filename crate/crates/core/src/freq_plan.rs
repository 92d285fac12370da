//! Per-frequency acquisition planning.
//!
//! A requested test frequency is turned into a DDS frequency control word, an
//! adaptive ADC rate holding a multiple of four samples per period, an integer
//! clock divider realizing that rate from the logic clock, and the exact
//! (rational) number of samples spanned by one excitation period.
//!
//! All timing downstream of the control word is computed against the quantized
//! DDS frequency, never the requested one.

use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::Rational;

/// Hardware clocks that bound every plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClockConfig {
    /// Maximum ADC sampling rate, Hz.
    pub f_s: u64,
    /// FPGA logic clock, Hz.
    pub f_clk: u64,
    /// DDS reference clock, Hz.
    pub f_dds_clk: u64,
    /// Width of the frequency control word in bits.
    pub fcw_bits: u32,
}

impl Default for ClockConfig {
    fn default() -> Self {
        Self {
            f_s: 200_000,
            f_clk: 50_000_000,
            f_dds_clk: 100_000_000,
            fcw_bits: 32,
        }
    }
}

impl ClockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.f_s == 0 || self.f_clk == 0 || self.f_dds_clk == 0 {
            return Err(Error::Clock("all clock rates must be positive".into()));
        }
        if !(16..=48).contains(&self.fcw_bits) {
            return Err(Error::Clock(format!(
                "FCW width {} outside [16, 48]",
                self.fcw_bits
            )));
        }
        if self.f_clk < 100 * self.f_s {
            return Err(Error::Clock(format!(
                "logic clock {} Hz must be at least 100x the ADC rate {} Hz",
                self.f_clk, self.f_s
            )));
        }
        Ok(())
    }

    /// Lowest plannable frequency, set by the DDS resolution `f_dds_clk / 2^31`.
    pub fn band_floor_hz(&self) -> f64 {
        self.f_dds_clk as f64 / 2f64.powi(31)
    }

    /// Highest plannable frequency, `f_s / 4`.
    pub fn band_ceiling_hz(&self) -> f64 {
        self.f_s as f64 / 4.0
    }

    pub fn check_band(&self, freq_hz: f64) -> Result<()> {
        let (lo_hz, hi_hz) = (self.band_floor_hz(), self.band_ceiling_hz());
        if !freq_hz.is_finite() || freq_hz < lo_hz || freq_hz > hi_hz {
            return Err(Error::Band {
                freq_hz,
                lo_hz,
                hi_hz,
            });
        }
        Ok(())
    }
}

/// A quantized DDS frequency control word.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fcw {
    pub word: u64,
    /// Frequency the DDS actually emits for `word`, Hz.
    pub actual_hz: f64,
}

pub(crate) fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Control word for `freq_hz` without the band check.
pub fn compute_fcw_unchecked(freq_hz: f64, clocks: &ClockConfig) -> Fcw {
    let scale = 2f64.powi(clocks.fcw_bits as i32);
    let word = round_half_up(scale * freq_hz / clocks.f_dds_clk as f64).max(0.0) as u64;
    Fcw {
        word,
        actual_hz: word as f64 * clocks.f_dds_clk as f64 / scale,
    }
}

/// Control word for `freq_hz`, rejecting frequencies outside the hardware band.
pub fn compute_fcw(freq_hz: f64, clocks: &ClockConfig) -> Result<Fcw> {
    clocks.check_band(freq_hz)?;
    let fcw = compute_fcw_unchecked(freq_hz, clocks);
    if fcw.word == 0 {
        return Err(Error::Band {
            freq_hz,
            lo_hz: clocks.band_floor_hz(),
            hi_hz: clocks.band_ceiling_hz(),
        });
    }
    Ok(fcw)
}

/// Fully determined acquisition schedule for one test frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub requested_hz: f64,
    pub fcw: u64,
    /// DDS-quantized excitation frequency.
    pub actual_hz: f64,
    /// Adaptive ADC rate; an exact multiple of `4 * requested_hz`.
    pub adaptive_rate_hz: f64,
    /// `adaptive_rate_hz / requested_hz`, always divisible by 4.
    pub nominal_samples: u64,
    /// Logic-clock divider realizing the adaptive rate.
    pub divider: u64,
    /// `f_clk / divider`, exact.
    pub effective_rate: Rational,
    /// `|effective rate - adaptive rate|`, Hz.
    pub rate_error_hz: f64,
    /// Samples per excitation period, `effective_rate / actual_hz`, exact.
    pub period: Rational,
    /// Samples acquired per cycle, `ceil(period)`.
    pub cycle_len: usize,
}

impl SamplingPlan {
    pub fn effective_rate_hz(&self) -> f64 {
        self.effective_rate.to_f64().unwrap_or(f64::NAN)
    }

    pub fn period_f64(&self) -> f64 {
        self.period.to_f64().unwrap_or(f64::NAN)
    }

    /// `n / period`, the fraction of a cycle elapsed at sample `n` of a
    /// cycle-aligned acquisition. Computed from the exact period each time so
    /// no phase error accumulates across the cycle.
    pub fn phase_fraction(&self, n: usize) -> f64 {
        PhaseMap::new(&self.period).fraction(n)
    }

    /// Time spent acquiring `cycles` cycles of `cycle_len` samples.
    pub fn acquisition_seconds(&self, cycles: usize) -> f64 {
        (cycles * self.cycle_len) as f64 / self.effective_rate_hz()
    }
}

/// Builds the acquisition schedule for `freq_hz`.
pub fn plan_sampling(freq_hz: f64, clocks: &ClockConfig) -> Result<SamplingPlan> {
    clocks.validate()?;
    let fcw = compute_fcw(freq_hz, clocks)?;
    let f_s = clocks.f_s as f64;

    let per_period = (f_s / freq_hz).floor() as u64;
    let nominal_samples = if per_period.is_multiple_of(4) {
        per_period
    } else {
        4 * (f_s / (4.0 * freq_hz)).floor() as u64
    };
    if nominal_samples == 0 {
        return Err(Error::Plan {
            freq_hz,
            reason: "fewer than 4 samples per period at the maximum ADC rate".into(),
        });
    }
    let adaptive_rate_hz = nominal_samples as f64 * freq_hz;

    let divider = round_half_up(clocks.f_clk as f64 / adaptive_rate_hz).max(1.0) as u64;
    let effective_rate = Rational::new(clocks.f_clk as i128, divider as i128);
    let rate_error_hz = (clocks.f_clk as f64 / divider as f64 - adaptive_rate_hz).abs();

    // (f_clk / k) / (m f_dds / 2^M)
    let period = Rational::new(
        (clocks.f_clk as i128) << clocks.fcw_bits,
        divider as i128 * fcw.word as i128 * clocks.f_dds_clk as i128,
    );
    let cycle_len = ceil_rational(&period) as usize;

    Ok(SamplingPlan {
        requested_hz: freq_hz,
        fcw: fcw.word,
        actual_hz: fcw.actual_hz,
        adaptive_rate_hz,
        nominal_samples,
        divider,
        effective_rate,
        rate_error_hz,
        period,
        cycle_len,
    })
}

fn ceil_rational(r: &Rational) -> i128 {
    r.ceil().to_integer()
}

/// Evaluates `n / period` for a fixed rational period.
///
/// `n * denom` is formed exactly in integers before the single division, so
/// the phase of every sample is correctly rounded from the exact value.
#[derive(Debug, Clone, Copy)]
pub struct PhaseMap {
    denom: i128,
    numer: f64,
    small_denom: Option<i64>,
}

impl PhaseMap {
    pub fn new(period: &Rational) -> Self {
        let denom = *period.denom();
        Self {
            denom,
            numer: *period.numer() as f64,
            small_denom: i64::try_from(denom).ok().filter(|d| *d < 1 << 31),
        }
    }

    #[inline]
    pub fn fraction(&self, n: usize) -> f64 {
        match self.small_denom {
            // n < 2^32 here, so the product stays below 2^63
            Some(d) if n < 1 << 32 => (n as i64 * d) as f64 / self.numer,
            _ => (n as i128 * self.denom) as f64 / self.numer,
        }
    }
}

/// One of the five quarter-cycle boundaries `j * period / 4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuarterBoundary {
    pub quarter: u8,
    /// Whole-sample part of the boundary.
    pub index: u64,
    /// Fractional part, in `[0, 1)`.
    pub residue: Rational,
}

impl QuarterBoundary {
    /// Exact boundary position in samples.
    pub fn position(&self) -> Rational {
        Rational::from_integer(self.index as i128) + self.residue
    }

    pub fn residue_f64(&self) -> f64 {
        self.residue.to_f64().unwrap_or(f64::NAN)
    }
}

pub fn quarter_boundaries(plan: &SamplingPlan) -> [QuarterBoundary; 5] {
    boundaries_for_period(plan.period)
}

/// Quarter boundaries of an arbitrary rational period.
pub fn boundaries_for_period(period: Rational) -> [QuarterBoundary; 5] {
    std::array::from_fn(|j| {
        let pos = period * Rational::from_integer(j as i128) / Rational::from_integer(4);
        let whole = pos.floor();
        QuarterBoundary {
            quarter: j as u8,
            index: whole.to_integer() as u64,
            residue: pos - whole,
        }
    })
}
