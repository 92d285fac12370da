//! CSV emission and parsing.

use std::fmt::Write as _;

use hermeis_core::SpectrumPoint;

use crate::CliError;

pub const SPECTRUM_HEADER: &str =
    "freq_hz,freq_actual_hz,channel,zmag_ohm_raw,zmag_ohm_cal,zphase_deg,i_acc,q_acc,clipped,overflow";

pub const SIG_DIGITS: usize = 9;

/// `printf("%.*g")`: `digits` significant digits, trailing zeros removed,
/// exponent form outside `1e-4 <= |x| < 10^digits`.
pub fn format_g(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let digits = digits.max(1);
    // the exponent after rounding to `digits` places decides the style
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn g(x: f64) -> String {
    format_g(x, SIG_DIGITS)
}

/// Points ordered by frequency, then channel id.
pub fn sorted_points(points: &[SpectrumPoint]) -> Vec<SpectrumPoint> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| {
        a.freq_hz
            .total_cmp(&b.freq_hz)
            .then(a.channel_id.cmp(&b.channel_id))
    });
    pts
}

pub fn spectrum_csv(points: &[SpectrumPoint]) -> String {
    let mut out = String::with_capacity(128 * (points.len() + 1));
    out.push_str(SPECTRUM_HEADER);
    out.push('\n');
    for p in sorted_points(points) {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            g(p.freq_hz),
            g(p.freq_actual_hz),
            p.channel_id,
            g(p.z_mag_raw),
            g(p.z_mag_cal),
            g(p.z_phase),
            g(p.i_acc),
            g(p.q_acc),
            p.flags.clipped as u8,
            p.flags.overflow as u8,
        )
        .expect("writing to a String");
    }
    out
}

/// One data row of a spectrum CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumRow {
    pub freq_hz: f64,
    pub freq_actual_hz: f64,
    pub channel: u32,
    pub zmag_ohm_raw: f64,
    pub zmag_ohm_cal: f64,
    pub zphase_deg: f64,
    pub i_acc: f64,
    pub q_acc: f64,
    pub clipped: bool,
    pub overflow: bool,
}

pub fn parse_spectrum_csv(text: &str) -> Result<Vec<SpectrumRow>, CliError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SPECTRUM_HEADER => {}
        _ => {
            return Err(CliError::Parse {
                line: 1,
                key: "header".into(),
                message: format!("expected {SPECTRUM_HEADER:?}"),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(idx, line)| {
            let bad = |message: String| CliError::Parse {
                line: idx + 1,
                key: line.to_string(),
                message,
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(bad(format!("expected 10 fields, got {}", f.len())));
            }
            let num = |i: usize| {
                f[i].parse::<f64>()
                    .map_err(|_| bad(format!("field {} is not a number", i + 1)))
            };
            let flag = |i: usize| match f[i] {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(format!("field {} is not a 0/1 flag", i + 1))),
            };
            Ok(SpectrumRow {
                freq_hz: num(0)?,
                freq_actual_hz: num(1)?,
                channel: f[2]
                    .parse()
                    .map_err(|_| bad("channel is not an integer".into()))?,
                zmag_ohm_raw: num(3)?,
                zmag_ohm_cal: num(4)?,
                zphase_deg: num(5)?,
                i_acc: num(6)?,
                q_acc: num(7)?,
                clipped: flag(8)?,
                overflow: flag(9)?,
            })
        })
        .collect()
}
