//! Impedance recovery from I/Q pairs, plus the single-bin Fourier oracle.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::afe::CycleSamples;
use crate::error::{Error, Result};
use crate::freq_plan::SamplingPlan;
use crate::iq::IQAccumulator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelRole {
    Reference,
    /// Working electrode behind the inverting readout.
    Working,
}

/// `X = I - jQ`, negated for working channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexResponse {
    pub x: Complex64,
    pub role: ChannelRole,
}

impl ComplexResponse {
    pub fn phase_deg(&self) -> f64 {
        self.x.arg().to_degrees()
    }
}

pub fn intermediary(iq: &IQAccumulator, role: ChannelRole) -> Result<ComplexResponse> {
    let mut x = Complex64::new(iq.i_scaled, -iq.q_scaled);
    if !(x.norm() > 0.0) {
        return Err(Error::Degenerate);
    }
    if role == ChannelRole::Working {
        x = -x;
    }
    Ok(ComplexResponse { x, role })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    /// Multiplies recovered magnitudes; phase is untouched.
    pub alpha: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { alpha: 1.0 / 600.0 }
    }
}

impl CalibrationConfig {
    pub fn identity() -> Self {
        Self { alpha: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0 && self.alpha.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)))
        }
    }
}

/// Wraps degrees into `(-180, 180]`.
pub fn wrap_degrees(deg: f64) -> f64 {
    let mut d = deg % 360.0;
    if d <= -180.0 {
        d += 360.0;
    } else if d > 180.0 {
        d -= 360.0;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpedanceEstimate {
    pub z_mag_raw: f64,
    pub z_mag_cal: f64,
    /// Degrees in `(-180, 180]`.
    pub z_phase: f64,
}

impl ImpedanceEstimate {
    pub fn complex_raw(&self) -> Complex64 {
        Complex64::from_polar(self.z_mag_raw, self.z_phase.to_radians())
    }
}

/// `|Z| = R_out |X_ref / X_ch|`, `arg Z = arg X_ref - arg X_ch`.
pub fn impedance_point(
    x_ref: &ComplexResponse,
    x_ch: &ComplexResponse,
    r_out: f64,
    cal: &CalibrationConfig,
) -> Result<ImpedanceEstimate> {
    if !(x_ch.x.norm() > 0.0) || !(x_ref.x.norm() > 0.0) {
        return Err(Error::Degenerate);
    }
    let z_mag_raw = r_out * x_ref.x.norm() / x_ch.x.norm();
    Ok(ImpedanceEstimate {
        z_mag_raw,
        z_mag_cal: cal.alpha * z_mag_raw,
        z_phase: wrap_degrees(x_ref.phase_deg() - x_ch.phase_deg()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumFlags {
    pub overflow: bool,
    pub clipped: bool,
    /// Either response had zero magnitude; the impedance fields are NaN.
    pub degenerate: bool,
}

/// One impedance measurement of one channel at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    pub freq_hz: f64,
    pub freq_actual_hz: f64,
    pub channel_id: u32,
    pub z_mag_raw: f64,
    pub z_mag_cal: f64,
    pub z_phase: f64,
    /// The working channel's raw accumulator pair.
    pub i_acc: f64,
    pub q_acc: f64,
    /// Samples per period of the plan this point was measured with.
    pub period_samples: f64,
    pub flags: SpectrumFlags,
}

impl SpectrumPoint {
    pub fn z_raw(&self) -> Complex64 {
        Complex64::from_polar(self.z_mag_raw, self.z_phase.to_radians())
    }
}

/// Single-bin Fourier correlation of one cycle at the plan's period.
///
/// Returns (amplitude in code units, phase in degrees) using the same phase
/// convention as [`intermediary`]: `A sin(2 pi n / P + phi)` reads as `(A, phi)`.
/// The correlation is the trapezoid rule over the closed cycle, which for an
/// integer period is the plain sum over `n = 0..P`.
pub fn dft_oracle(cycle: CycleSamples<'_>, plan: &SamplingPlan) -> Result<(f64, f64)> {
    let len = plan.cycle_len;
    if cycle.len() < len {
        return Err(Error::Length {
            available: cycle.len(),
            required: len,
        });
    }
    let period = plan.period_f64();
    let mut c = 0.0;
    let mut s = 0.0;
    for n in 0..len {
        let theta = 2.0 * PI * plan.phase_fraction(n);
        // trapezoid weights on nodes 0..len-1 plus the closing node at P,
        // whose value is sample 0 again
        let w = node_weight(n, len, period);
        let x = cycle.get(n);
        c += w * x * theta.cos();
        s += w * x * theta.sin();
    }
    let magnitude = 2.0 * c.hypot(s) / period;
    Ok((magnitude, c.atan2(s).to_degrees()))
}

fn node_weight(n: usize, len: usize, period: f64) -> f64 {
    let last = period - (len - 1) as f64;
    match (n, len) {
        (_, 1) => period,
        (0, _) => 0.5 + 0.5 * last,
        (n, len) if n == len - 1 => 0.5 + 0.5 * last,
        _ => 1.0,
    }
}

/// Frequency of the peak of `-Im Z` (the apex of the Nyquist semicircle),
/// refined by a parabola in `ln f` through the peak and its neighbours.
///
/// For a series resistance plus a parallel RC this is `1 / (2 pi R C)`, the
/// frequency at which the RC branch alone sits at -45 degrees.
pub fn nyquist_apex_hz(points: &[SpectrumPoint]) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| !p.flags.degenerate)
        .map(|p| (p.freq_actual_hz.ln(), -p.z_raw().im))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    if pts.len() < 3 {
        return None;
    }
    let k = (0..pts.len()).max_by(|&a, &b| pts[a].1.total_cmp(&pts[b].1))?;
    if k == 0 || k == pts.len() - 1 {
        return None;
    }
    let (x0, y0) = pts[k - 1];
    let (x1, y1) = pts[k];
    let (x2, y2) = pts[k + 1];
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    if !(a < 0.0) {
        return Some(x1.exp());
    }
    Some((-b / (2.0 * a)).exp())
}

/// First frequency at which the measured phase falls through `target_deg`,
/// interpolated linearly in `ln f`. `None` if the phase never reaches it.
pub fn phase_crossing_hz(points: &[SpectrumPoint], target_deg: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| !p.flags.degenerate)
        .map(|p| (p.freq_actual_hz.ln(), p.z_phase))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y0 > target_deg && y1 <= target_deg {
            Some((x0 + (target_deg - y0) * (x1 - x0) / (y1 - y0)).exp())
        } else {
            None
        }
    })
}

/// Series resistance, arc diameter and corner of a depressed semicircle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcCorner {
    /// High-frequency intercept of the arc with the real axis, ohms.
    pub r_s: f64,
    /// Chord between the two real-axis intercepts, ohms.
    pub r_f: f64,
    /// Frequency at which `Z - r_s` crosses -45 degrees.
    pub corner_hz: f64,
}

/// Corner of the parallel RC branch behind a series resistance.
///
/// An algebraic circle fit through every point in the Nyquist plane gives the
/// series resistance as the arc's left real-axis intercept; the corner is
/// where the phase of `Z - r_s` crosses -45 degrees, interpolated in `ln f`.
/// Fitting the whole arc averages out per-point magnitude error, which the
/// flat top of the arc (see [`nyquist_apex_hz`]) does not.
pub fn rc_corner(points: &[SpectrumPoint]) -> Option<RcCorner> {
    let mut pts: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| !p.flags.degenerate && p.z_raw().re.is_finite() && p.z_raw().im.is_finite())
        .map(|p| {
            let z = p.z_raw();
            (p.freq_actual_hz.ln(), z.re, -z.im)
        })
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let (xc, yc, r) = fit_circle(&pts)?;
    let half_chord = (r * r - yc * yc).sqrt();
    if !half_chord.is_finite() {
        return None;
    }
    let r_s = xc - half_chord;

    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let branch: Vec<(f64, f64)> = pts
        .iter()
        .map(|&(u, x, y)| (u, (-y).atan2(x - r_s).to_degrees()))
        .collect();
    let corner_hz = branch.windows(2).find_map(|w| {
        let ((u0, p0), (u1, p1)) = (w[0], w[1]);
        (p0 > -45.0 && p1 <= -45.0).then(|| (u0 + (-45.0 - p0) * (u1 - u0) / (p1 - p0)).exp())
    })?;
    Some(RcCorner {
        r_s,
        r_f: 2.0 * half_chord,
        corner_hz,
    })
}

/// Least-squares `x^2 + y^2 + D x + E y + F = 0` on centred, scaled data.
/// Returns (centre x, centre y, radius).
fn fit_circle(pts: &[(f64, f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.2).sum::<f64>() / n;
    let scale = pts
        .iter()
        .map(|p| (p.1 - mx).hypot(p.2 - my))
        .fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for &(_, x, y) in pts {
        let (x, y) = ((x - mx) / scale, (y - my) / scale);
        let row = [x, y, 1.0];
        let rhs = -(x * x + y * y);
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
            b[i] += row[i] * rhs;
        }
    }
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut sol = [0.0; 3];
    for (k, s) in sol.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        *s = det(&m) / d;
    }
    let (cx, cy) = (-sol[0] / 2.0, -sol[1] / 2.0);
    let r2 = cx * cx + cy * cy - sol[2];
    if !(r2 > 0.0) {
        return None;
    }
    Some((mx + cx * scale, my + cy * scale, r2.sqrt() * scale))
}
