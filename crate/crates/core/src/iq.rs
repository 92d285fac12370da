//! Quarter-cycle integration and the I/Q pair.
//!
//! One acquired cycle is integrated over its four quarters `[jP/4, (j+1)P/4]`,
//! `P` being the exact rational period in samples. The integrand is the
//! piecewise-linear interpolant through the cycle's samples, closed at `t = P`
//! by the cycle's own first sample (the next cycle's zero-phase instant). Each
//! quarter sum is then a plain run of whole samples plus a handful of
//! residue-weighted edge samples at either end.
//!
//! In code mode the sums are accumulated as emulated 32-bit signed fixed-point
//! values with `frac_bits` fractional bits, saturating on overflow. The
//! fractional bits only carry the edge weights.
//!
//! The I/Q pair is formed as
//! `I = (S0 + S1 - S2 - S3) / 2`, `Q = (S1 + S2 - S0 - S3) / 2`,
//! which is the effective-rate-scaled version of the quarter-cycle integrals:
//! for `x = A sin(2 pi t / P + phi)` it tends to `I = A P cos(phi) / pi`,
//! `Q = -A P sin(phi) / pi`.

use crate::afe::{CycleSamples, SampleStream};
use crate::error::{Error, Result};
use crate::freq_plan::{boundaries_for_period, round_half_up, QuarterBoundary, SamplingPlan};
use crate::Rational;

pub const MAX_FRAC_BITS: u32 = 8;

/// Largest period whose worst-case quarter sum `(2^bits - 1) P / 4` stays
/// below `2^31` in units of `2^-frac_bits`.
pub fn max_safe_period(adc_bits: u32, frac_bits: u32) -> f64 {
    let full = ((1u64 << adc_bits) - 1) as f64;
    4.0 * 2f64.powi(31 - frac_bits as i32) / full
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverflowBudget {
    /// Fraction bits selected for this plan.
    pub frac_bits: u32,
    /// Headroom limit at the selected fraction width.
    pub max_period: f64,
    pub fits: bool,
}

/// Picks the widest fraction (at most [`MAX_FRAC_BITS`]) that keeps the plan's
/// quarter sums inside 32 bits.
pub fn overflow_budget(plan: &SamplingPlan, adc_bits: u32) -> OverflowBudget {
    budget_for_period(plan.period_f64(), adc_bits)
}

pub fn budget_for_period(period: f64, adc_bits: u32) -> OverflowBudget {
    for frac_bits in (0..=MAX_FRAC_BITS).rev() {
        let max_period = max_safe_period(adc_bits, frac_bits);
        if period < max_period {
            return OverflowBudget {
                frac_bits,
                max_period,
                fits: true,
            };
        }
    }
    OverflowBudget {
        frac_bits: 0,
        max_period: max_safe_period(adc_bits, 0),
        fits: false,
    }
}

/// Sample weights of one quarter: unit weight over `interior`, plus edges.
#[derive(Debug, Clone, PartialEq)]
struct QuarterWeights {
    interior: Option<(usize, usize)>,
    edges: Vec<(usize, f64)>,
}

/// Precomputed integration weights for one period.
///
/// Reusable across every stream sharing a plan, i.e. the reference and all
/// working channels of one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarterIntegrator {
    boundaries: [QuarterBoundary; 5],
    cycle_len: usize,
    quarters: [QuarterWeights; 4],
}

impl QuarterIntegrator {
    pub fn new(plan: &SamplingPlan) -> Self {
        Self::for_period(plan.period)
    }

    pub fn for_period(period: Rational) -> Self {
        let boundaries = boundaries_for_period(period);
        let cycle_len = period.ceil().to_integer() as usize;
        let period_f = boundaries[4].index as f64 + boundaries[4].residue_f64();
        // length of the closing segment [cycle_len - 1, P]
        let last_len = period_f - (cycle_len - 1) as f64;

        let quarters = std::array::from_fn(|j| {
            let (a, b) = (&boundaries[j], &boundaries[j + 1]);
            let (sa, u) = (a.index as usize, a.residue_f64());
            let (sb, v) = if j == 3 {
                (cycle_len - 1, last_len)
            } else {
                (b.index as usize, b.residue_f64())
            };
            let seg_len = |k: usize| if k == cycle_len - 1 { last_len } else { 1.0 };
            let wrap = |k: usize| if k == cycle_len { 0 } else { k };

            let mut edges: Vec<(usize, f64)> = Vec::with_capacity(6);
            let mut add = |k: usize, w: f64| {
                let k = wrap(k);
                match edges.iter_mut().find(|(n, _)| *n == k) {
                    Some(e) => e.1 += w,
                    None => edges.push((k, w)),
                }
            };
            let mut partial = |k: usize, u: f64, v: f64| {
                let h = seg_len(k);
                let tail = (v * v - u * u) / (2.0 * h);
                add(k, (v - u) - tail);
                add(k + 1, tail);
            };

            let mut interior = None;
            if sa == sb {
                partial(sa, u, v);
            } else {
                partial(sa, u, seg_len(sa));
                partial(sb, 0.0, v);
                // full unit segments sa+1 .. sb-1
                if sb > sa + 1 {
                    add(sa + 1, 0.5);
                    add(sb, 0.5);
                    if sb > sa + 2 {
                        interior = Some((sa + 2, sb - 1));
                    }
                }
            }
            edges.retain(|(_, w)| *w != 0.0);
            edges.sort_by_key(|(n, _)| *n);
            QuarterWeights { interior, edges }
        });

        Self {
            boundaries,
            cycle_len,
            quarters,
        }
    }

    pub fn boundaries(&self) -> &[QuarterBoundary; 5] {
        &self.boundaries
    }

    pub fn cycle_len(&self) -> usize {
        self.cycle_len
    }

    /// Integrates one cycle. `frac_bits` only applies to code samples.
    pub fn sums(&self, cycle: CycleSamples<'_>, frac_bits: u32) -> Result<QuarterSums> {
        if cycle.len() < self.cycle_len {
            return Err(Error::Length {
                available: cycle.len(),
                required: self.cycle_len,
            });
        }
        let (values, overflow) = match cycle {
            CycleSamples::Codes(codes) => {
                let frac_bits = frac_bits.min(MAX_FRAC_BITS);
                let mut raw = [0i32; 4];
                let mut overflow = false;
                for (j, q) in self.quarters.iter().enumerate() {
                    let mut acc = Accumulator32::default();
                    if let Some((lo, hi)) = q.interior {
                        // non-negative terms: saturating the block sum once
                        // matches saturating after every sample
                        let block: u64 = codes[lo..=hi].iter().map(|&c| c as u64).sum();
                        acc.add((block << frac_bits) as i64);
                    }
                    let scale = (1u64 << frac_bits) as f64;
                    for &(n, w) in &q.edges {
                        let wq = round_half_up(w * scale) as i64;
                        acc.add(wq * codes[n] as i64);
                    }
                    raw[j] = acc.value;
                    overflow |= acc.saturated;
                }
                (QuarterValues::Fixed { raw, frac_bits }, overflow)
            }
            CycleSamples::Ideal(x) => {
                let mut s = [0f64; 4];
                for (j, q) in self.quarters.iter().enumerate() {
                    let mut acc = 0.0;
                    if let Some((lo, hi)) = q.interior {
                        acc += x[lo..=hi].iter().sum::<f64>();
                    }
                    for &(n, w) in &q.edges {
                        acc += w * x[n];
                    }
                    s[j] = acc;
                }
                (QuarterValues::Ideal(s), false)
            }
        };
        Ok(QuarterSums {
            values,
            boundaries: self.boundaries,
            overflow,
        })
    }
}

/// Emulated 32-bit signed saturating accumulator.
#[derive(Debug, Default, Clone, Copy)]
struct Accumulator32 {
    value: i32,
    saturated: bool,
}

impl Accumulator32 {
    fn add(&mut self, x: i64) {
        let sum = self.value as i64 + x;
        if sum > i32::MAX as i64 {
            self.value = i32::MAX;
            self.saturated = true;
        } else if sum < i32::MIN as i64 {
            self.value = i32::MIN;
            self.saturated = true;
        } else {
            self.value = sum as i32;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuarterValues {
    /// Raw accumulator words in units of `2^-frac_bits` code samples.
    Fixed { raw: [i32; 4], frac_bits: u32 },
    Ideal([f64; 4]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarterSums {
    pub values: QuarterValues,
    pub boundaries: [QuarterBoundary; 5],
    pub overflow: bool,
}

impl QuarterSums {
    /// Quarter sum `j` in code-sample units.
    pub fn value(&self, j: usize) -> f64 {
        match self.values {
            QuarterValues::Fixed { raw, frac_bits } => raw[j] as f64 / (1u64 << frac_bits) as f64,
            QuarterValues::Ideal(s) => s[j],
        }
    }

    pub fn values_f64(&self) -> [f64; 4] {
        std::array::from_fn(|j| self.value(j))
    }
}

/// Integrates one cycle of `samples` over the quarters delimited by `boundaries`.
pub fn quarter_sums(
    samples: CycleSamples<'_>,
    boundaries: &[QuarterBoundary; 5],
    frac_bits: u32,
) -> Result<QuarterSums> {
    QuarterIntegrator::for_period(boundaries[4].position()).sums(samples, frac_bits)
}

/// Effective-rate-scaled I/Q pair, in code-sample units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IQAccumulator {
    pub i_scaled: f64,
    pub q_scaled: f64,
    pub effective_rate_hz: f64,
    /// Fraction width of the accumulator; `None` for ideal streams.
    pub frac_bits: Option<u32>,
    pub overflow: bool,
}

impl IQAccumulator {
    /// Unscaled I and Q, in code-seconds.
    pub fn continuous(&self) -> (f64, f64) {
        (
            self.i_scaled / self.effective_rate_hz,
            self.q_scaled / self.effective_rate_hz,
        )
    }
}

pub fn iq_from_sums(sums: &QuarterSums, effective_rate_hz: f64) -> IQAccumulator {
    match sums.values {
        QuarterValues::Fixed { raw, frac_bits } => {
            let [s0, s1, s2, s3] = raw.map(|s| s as i64);
            let i2 = s0 + s1 - s2 - s3;
            let q2 = s1 + s2 - s0 - s3;
            // the halved result must still fit a 32-bit word
            let limit = 1i64 << 32;
            let scale = (1u64 << (frac_bits + 1)) as f64;
            IQAccumulator {
                i_scaled: i2 as f64 / scale,
                q_scaled: q2 as f64 / scale,
                effective_rate_hz,
                frac_bits: Some(frac_bits),
                overflow: sums.overflow || i2.abs() >= limit || q2.abs() >= limit,
            }
        }
        QuarterValues::Ideal([s0, s1, s2, s3]) => IQAccumulator {
            i_scaled: (s0 + s1 - s2 - s3) / 2.0,
            q_scaled: (s1 + s2 - s0 - s3) / 2.0,
            effective_rate_hz,
            frac_bits: None,
            overflow: false,
        },
    }
}

/// Reduces cycle `cycle_index` of `stream` to an I/Q pair, choosing the
/// fraction width from the plan's overflow budget.
pub fn reduce_cycle(stream: &SampleStream, cycle_index: usize) -> Result<IQAccumulator> {
    let integrator = QuarterIntegrator::new(&stream.plan);
    let budget = overflow_budget(&stream.plan, stream.bits);
    let sums = integrator.sums(stream.cycle(cycle_index)?, budget.frac_bits)?;
    Ok(iq_from_sums(&sums, stream.plan.effective_rate_hz()))
}
