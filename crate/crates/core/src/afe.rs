//! Analog front end: device-under-test impedance, rheostat gain stages, the
//! inverting transimpedance readout, and the single-ended SAR ADC.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dds::ExcitationSpec;
use crate::error::{Error, Result};
use crate::freq_plan::{round_half_up, PhaseMap, SamplingPlan};

/// Series resistance followed by a faradaic resistance in parallel with the
/// double-layer capacitance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandlesModel {
    pub r_s: f64,
    pub r_f: f64,
    pub c_dl: f64,
}

impl RandlesModel {
    pub fn new(r_s: f64, r_f: f64, c_dl: f64) -> Result<Self> {
        let model = Self { r_s, r_f, c_dl };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if ok(self.r_s) && ok(self.r_f) && ok(self.c_dl) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "Randles components must be positive: {self:?}"
            )))
        }
    }

    /// Corner `1 / (R_F C_dl)` in rad/s.
    pub fn corner_rad_s(&self) -> f64 {
        1.0 / (self.r_f * self.c_dl)
    }

    pub fn corner_hz(&self) -> f64 {
        self.corner_rad_s() / (2.0 * PI)
    }

    pub fn impedance(&self, omega: f64) -> Complex64 {
        randles_impedance(self, omega)
    }
}

pub fn randles_impedance(model: &RandlesModel, omega: f64) -> Complex64 {
    let denom = Complex64::new(1.0, omega * model.r_f * model.c_dl);
    Complex64::new(model.r_s, 0.0) + model.r_f / denom
}

/// Measured or synthetic spectrum replayed as a device under test.
///
/// Interpolation is linear in `log f` for the real and imaginary parts
/// separately. Outside the tabulated range the end values are held.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceTable {
    points: Vec<(f64, Complex64)>,
}

impl ImpedanceTable {
    pub fn new(mut points: Vec<(f64, Complex64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("impedance table is empty".into()));
        }
        if points.iter().any(|(f, z)| !(*f > 0.0) || !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Config(
                "impedance table needs positive frequencies and finite values".into(),
            ));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config("impedance table has duplicate frequencies".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, Complex64)] {
        &self.points
    }

    pub fn at(&self, freq_hz: f64) -> Complex64 {
        let pts = &self.points;
        if freq_hz <= pts[0].0 {
            return pts[0].1;
        }
        if freq_hz >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let hi = pts.partition_point(|(f, _)| *f <= freq_hz);
        let (f0, z0) = pts[hi - 1];
        let (f1, z1) = pts[hi];
        let t = (freq_hz.ln() - f0.ln()) / (f1.ln() - f0.ln());
        z0 + (z1 - z0) * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DutModel {
    Randles(RandlesModel),
    Resistor(f64),
    Table(ImpedanceTable),
}

impl DutModel {
    pub fn impedance_at(&self, freq_hz: f64) -> Complex64 {
        match self {
            DutModel::Randles(m) => m.impedance(2.0 * PI * freq_hz),
            DutModel::Resistor(r) => Complex64::new(*r, 0.0),
            DutModel::Table(t) => t.at(freq_hz),
        }
    }

    /// Closed-form impedance, if the model has one.
    pub fn analytic(&self, freq_hz: f64) -> Option<Complex64> {
        match self {
            DutModel::Table(_) => None,
            _ => Some(self.impedance_at(freq_hz)),
        }
    }
}

/// 7-bit digital rheostat and the reference-stage input resistor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RheostatSpec {
    pub r_max: f64,
    pub r_min: f64,
    /// Fixed input resistor of the reference amplitude stage.
    pub r_a: f64,
}

impl Default for RheostatSpec {
    fn default() -> Self {
        Self {
            r_max: 50e3,
            r_min: 100.0,
            r_a: 100e3,
        }
    }
}

impl RheostatSpec {
    pub fn validate(&self) -> Result<()> {
        if self.r_min > 0.0 && self.r_min < self.r_max && self.r_a > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid rheostat spec: {self:?}")))
        }
    }
}

pub const RHEOSTAT_MAX_CODE: u32 = 127;

pub fn rheostat_resistance(code: u32, spec: &RheostatSpec) -> Result<f64> {
    if code > RHEOSTAT_MAX_CODE {
        return Err(Error::Range(code as i64));
    }
    Ok(spec.r_min + spec.r_max * code as f64 / RHEOSTAT_MAX_CODE as f64)
}

/// Peak-to-peak reference amplitude after the `R_in / R_A` stage.
pub fn reference_amplitude(n_in: u32, v_in_pp: f64, spec: &RheostatSpec) -> Result<f64> {
    Ok(rheostat_resistance(n_in, spec)? / spec.r_a * v_in_pp)
}

/// Single-ended SAR ADC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcSpec {
    pub v_dd: f64,
    pub bits: u32,
    /// Skip quantization and clamping; samples stay in fractional code units.
    pub ideal: bool,
}

impl Default for AdcSpec {
    fn default() -> Self {
        Self {
            v_dd: 3.3,
            bits: 10,
            ideal: false,
        }
    }
}

impl AdcSpec {
    pub fn full_scale(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_dd > 0.0) || !(1..=16).contains(&self.bits) {
            return Err(Error::Config(format!("invalid ADC spec: {self:?}")));
        }
        Ok(())
    }

    /// Unquantized code value of `v`.
    pub fn to_code_units(&self, v: f64) -> f64 {
        v / self.v_dd * self.full_scale() as f64
    }
}

/// Converts `v` to an ADC code, rounding half up. The flag reports clamping.
pub fn adc_quantize(v: f64, v_dd: f64, bits: u32) -> (u16, bool) {
    let full = ((1u32 << bits) - 1) as f64;
    let raw = round_half_up(v / v_dd * full);
    if raw < 0.0 {
        (0, true)
    } else if raw > full {
        (full as u16, true)
    } else {
        (raw as u16, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Codes(Vec<u16>),
    /// Unquantized values in code units.
    Ideal(Vec<f64>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Codes(c) => c.len(),
            Samples::Ideal(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, n: usize) -> f64 {
        match self {
            Samples::Codes(c) => c[n] as f64,
            Samples::Ideal(v) => v[n],
        }
    }
}

/// Borrowed samples of one acquired cycle.
#[derive(Debug, Clone, Copy)]
pub enum CycleSamples<'a> {
    Codes(&'a [u16]),
    Ideal(&'a [f64]),
}

impl CycleSamples<'_> {
    pub fn len(&self) -> usize {
        match self {
            CycleSamples::Codes(c) => c.len(),
            CycleSamples::Ideal(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, n: usize) -> f64 {
        match self {
            CycleSamples::Codes(c) => c[n] as f64,
            CycleSamples::Ideal(v) => v[n],
        }
    }
}

/// Samples of a single ADC channel over one or more excitation cycles.
///
/// Acquisition is cycle-aligned: sample `n` of every cycle is taken `n`
/// effective-rate ticks after that cycle's zero-phase instant, so each cycle
/// holds `plan.cycle_len` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub samples: Samples,
    pub bits: u32,
    pub plan: SamplingPlan,
    pub cycles: usize,
    /// Any sample clamped by the ADC.
    pub clipped: bool,
    /// Clamping per acquired cycle.
    pub cycle_clipped: Vec<bool>,
    /// `None` for the reference channel.
    pub channel_id: Option<u32>,
}

impl SampleStream {
    /// Samples `voltage(cycle, n, n / period)` over `cycles` cycles through `adc`.
    pub fn acquire(
        plan: &SamplingPlan,
        cycles: usize,
        adc: &AdcSpec,
        channel_id: Option<u32>,
        mut voltage: impl FnMut(usize, usize, f64) -> f64,
    ) -> Self {
        let len = cycles * plan.cycle_len;
        let phase = PhaseMap::new(&plan.period);
        let mut cycle_clipped = vec![false; cycles];
        let samples = if adc.ideal {
            let mut out = Vec::with_capacity(len);
            for (cycle, clipped) in cycle_clipped.iter_mut().enumerate() {
                for n in 0..plan.cycle_len {
                    let v = voltage(cycle, n, phase.fraction(n));
                    *clipped |= v < 0.0 || v > adc.v_dd;
                    out.push(adc.to_code_units(v));
                }
            }
            Samples::Ideal(out)
        } else {
            let mut out = Vec::with_capacity(len);
            for (cycle, clipped) in cycle_clipped.iter_mut().enumerate() {
                for n in 0..plan.cycle_len {
                    let v = voltage(cycle, n, phase.fraction(n));
                    let (code, clip) = adc_quantize(v, adc.v_dd, adc.bits);
                    *clipped |= clip;
                    out.push(code);
                }
            }
            Samples::Codes(out)
        };
        Self {
            samples,
            bits: adc.bits,
            plan: plan.clone(),
            cycles,
            clipped: cycle_clipped.contains(&true),
            cycle_clipped,
            channel_id,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples of cycle `index` (0-based).
    pub fn cycle(&self, index: usize) -> Result<CycleSamples<'_>> {
        let n = self.plan.cycle_len;
        let (start, end) = (index * n, (index + 1) * n);
        if end > self.len() {
            return Err(Error::Length {
                available: self.len().saturating_sub(start),
                required: n,
            });
        }
        Ok(match &self.samples {
            Samples::Codes(c) => CycleSamples::Codes(&c[start..end]),
            Samples::Ideal(v) => CycleSamples::Ideal(&v[start..end]),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadoutSign {
    #[default]
    Inverting,
    NonInverting,
}

impl ReadoutSign {
    pub fn factor(self) -> f64 {
        match self {
            ReadoutSign::Inverting => -1.0,
            ReadoutSign::NonInverting => 1.0,
        }
    }
}

/// One working-electrode channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub id: u32,
    pub dut: DutModel,
    /// Output rheostat code setting the transimpedance gain.
    pub n_out: u32,
    /// Code assumed by the impedance computation; `None` means `n_out`.
    /// Differing values model a rheostat readback mismatch.
    pub assumed_n_out: Option<u32>,
    pub readout_sign: ReadoutSign,
    /// RMS volts of white Gaussian noise at the ADC input.
    pub noise_rms: f64,
    /// Volts of offset added during the first acquired cycle only.
    pub first_cycle_glitch: f64,
    pub rng_seed: u64,
}

impl ChannelConfig {
    pub fn new(id: u32, dut: DutModel) -> Self {
        Self {
            id,
            dut,
            n_out: 100,
            assumed_n_out: None,
            readout_sign: ReadoutSign::Inverting,
            noise_rms: 0.0,
            first_cycle_glitch: 0.0,
            rng_seed: id as u64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_out > RHEOSTAT_MAX_CODE {
            return Err(Error::Range(self.n_out as i64));
        }
        if let Some(n) = self.assumed_n_out {
            if n > RHEOSTAT_MAX_CODE {
                return Err(Error::Range(n as i64));
            }
        }
        if !(self.noise_rms >= 0.0) || !self.first_cycle_glitch.is_finite() {
            return Err(Error::Config(format!(
                "channel {}: noise_rms must be >= 0 and glitch finite",
                self.id
            )));
        }
        match &self.dut {
            DutModel::Randles(m) => m.validate(),
            DutModel::Resistor(r) if !(*r > 0.0) => Err(Error::Config(format!(
                "channel {}: resistor must be positive",
                self.id
            ))),
            _ => Ok(()),
        }
    }

    pub fn r_out(&self, rheo: &RheostatSpec) -> Result<f64> {
        rheostat_resistance(self.n_out, rheo)
    }

    /// Output resistance used when converting the I/Q ratio to ohms.
    pub fn assumed_r_out(&self, rheo: &RheostatSpec) -> Result<f64> {
        rheostat_resistance(self.assumed_n_out.unwrap_or(self.n_out), rheo)
    }
}

/// Seeded per-(channel, stream) noise source.
///
/// Each acquisition gets its own ChaCha stream so results do not depend on
/// the order in which channels or frequencies are simulated.
pub(crate) fn noise_source(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Steady-state readout of one working electrode, digitized.
pub fn channel_stream(
    ch: &ChannelConfig,
    spec: &ExcitationSpec,
    plan: &SamplingPlan,
    cycles: usize,
    rheo: &RheostatSpec,
    adc: &AdcSpec,
    stream_id: u64,
) -> Result<SampleStream> {
    ch.validate()?;
    let z = ch.dut.impedance_at(plan.actual_hz);
    if !(z.norm() > 0.0) || !z.norm().is_finite() {
        return Err(Error::Config(format!(
            "channel {}: impedance {z} at {} Hz is unusable",
            ch.id, plan.actual_hz
        )));
    }
    let r_out = ch.r_out(rheo)?;
    let amplitude = ch.readout_sign.factor() * r_out * spec.v1 / z.norm();
    let phase = spec.phi - z.arg();

    let mut rng = noise_source(ch.rng_seed, stream_id);
    let noise = Normal::new(0.0, ch.noise_rms)
        .map_err(|e| Error::Config(format!("channel {}: {e}", ch.id)))?;
    let noisy = ch.noise_rms > 0.0;

    let stream = SampleStream::acquire(plan, cycles, adc, Some(ch.id), |cycle, _, frac| {
        let theta = 2.0 * PI * frac + phase;
        let mut v = spec.v_mid + amplitude * theta.sin();
        if noisy {
            v += noise.sample(&mut rng);
        }
        if cycle == 0 {
            v += ch.first_cycle_glitch;
        }
        v
    });

    if stream.cycle_clipped.last() == Some(&true) && last_cycle_saturated(&stream, adc) {
        return Err(Error::Saturation { channel: ch.id });
    }
    Ok(stream)
}

/// Every sample of the final, steady-state cycle clipped.
fn last_cycle_saturated(stream: &SampleStream, adc: &AdcSpec) -> bool {
    let full = adc.full_scale();
    let Ok(cycle) = stream.cycle(stream.cycles - 1) else {
        return false;
    };
    match cycle {
        CycleSamples::Codes(c) => c.iter().all(|&x| x == 0 || x as u32 == full),
        CycleSamples::Ideal(v) => v.iter().all(|&x| x < 0.0 || x > full as f64),
    }
}
