//! DDS excitation source and the reference-channel readout.

use std::f64::consts::PI;

use rand_distr::{Distribution, Normal};

use crate::afe::{noise_source, AdcSpec, SampleStream};
use crate::error::{Error, Result};
use crate::freq_plan::SamplingPlan;

/// Peak-to-peak amplitude above which small-signal linearity is no longer assumed.
pub const LINEARITY_LIMIT_VPP: f64 = 0.05;

/// Sinusoidal excitation `v0 + v1 sin(theta + phi)`, raised by `v_mid` at the ADC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationSpec {
    pub v0: f64,
    /// Zero-to-peak amplitude, volts.
    pub v1: f64,
    /// Initial phase, radians.
    pub phi: f64,
    /// Mid-rail elevation applied before the single-ended ADC.
    pub v_mid: f64,
}

impl Default for ExcitationSpec {
    fn default() -> Self {
        Self {
            v0: 0.0,
            v1: 0.02,
            phi: 0.0,
            v_mid: 1.65,
        }
    }
}

impl ExcitationSpec {
    pub fn validate(&self, v_dd: f64) -> Result<()> {
        if !(self.v1 >= 0.0) || !self.v0.is_finite() || !self.phi.is_finite() {
            return Err(Error::Config(format!("invalid excitation: {self:?}")));
        }
        if !(0.0..=v_dd).contains(&self.v_mid) {
            return Err(Error::Config(format!(
                "mid-rail {} V outside [0, {v_dd}] V",
                self.v_mid
            )));
        }
        Ok(())
    }

    /// True when the excitation exceeds the small-signal linearity limit.
    pub fn exceeds_linearity_limit(&self) -> bool {
        2.0 * self.v1 > LINEARITY_LIMIT_VPP
    }
}

/// Excitation voltage at sample `n` of a cycle-aligned acquisition.
pub fn excitation_sample(spec: &ExcitationSpec, plan: &SamplingPlan, n: usize) -> f64 {
    spec.v0 + spec.v1 * (2.0 * PI * plan.phase_fraction(n) + spec.phi).sin()
}

/// Noise settings for the shared reference channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceNoise {
    pub rms: f64,
    pub seed: u64,
    pub stream_id: u64,
}

/// Digitized reference channel: `v_mid` plus the excitation.
pub fn reference_stream(
    spec: &ExcitationSpec,
    plan: &SamplingPlan,
    cycles: usize,
    adc: &AdcSpec,
    noise: Option<ReferenceNoise>,
) -> Result<SampleStream> {
    if cycles == 0 {
        return Err(Error::Config("at least one cycle is required".into()));
    }
    let mut source = match noise {
        Some(n) if n.rms > 0.0 => {
            let dist = Normal::new(0.0, n.rms)
                .map_err(|e| Error::Config(format!("reference noise: {e}")))?;
            Some((dist, noise_source(n.seed, n.stream_id)))
        }
        _ => None,
    };
    Ok(SampleStream::acquire(plan, cycles, adc, None, |_, _, frac| {
        let mut v = spec.v_mid + spec.v0 + spec.v1 * (2.0 * PI * frac + spec.phi).sin();
        if let Some((dist, rng)) = source.as_mut() {
            v += dist.sample(rng);
        }
        v
    }))
}
