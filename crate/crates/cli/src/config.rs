//! Flat `key = value` configuration files.
//!
//! ```text
//! # control Randles cell on one channel
//! grid.f_lo = 0.05
//! grid.f_hi = 50000
//! grid.n_points = 100
//! adc.ideal = true
//! calibration.alpha = 1
//!
//! channel.1.model = randles
//! channel.1.r_s = 3900
//! channel.1.r_f = 100e3
//! channel.1.c_dl = 68e-9
//! ```
//!
//! `protocol = control | varying_cdl | varying_rf` preloads channels 1 to 4;
//! `channel.<label>.*` keys then override or extend them. A channel's id is
//! its label unless `channel.<label>.id` is given.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hermeis_core::sweep::{control_protocol, varying_cdl_protocol, varying_rf_protocol};
use hermeis_core::{
    log_grid, CalibrationConfig, ChannelConfig, DutModel, ImpedanceTable, RandlesModel,
    ReadoutSign, SweepConfig,
};
use num_complex::Complex64;

use crate::CliError;

pub const SEED_ENV: &str = "HERMEIS_SEED";

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

impl Entry {
    fn parse_err(&self, key: &str, message: impl Into<String>) -> CliError {
        CliError::Parse {
            line: self.line,
            key: key.to_string(),
            message: message.into(),
        }
    }

    fn f64(&self, key: &str) -> Result<f64, CliError> {
        self.value
            .parse::<f64>()
            .map_err(|_| self.parse_err(key, format!("expected a number, got {:?}", self.value)))
    }

    /// Non-negative integer; scientific notation is accepted when exact.
    fn u64(&self, key: &str) -> Result<u64, CliError> {
        if let Ok(v) = self.value.parse::<u64>() {
            return Ok(v);
        }
        match self.value.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(64) => Ok(v as u64),
            _ => Err(self.parse_err(
                key,
                format!("expected a non-negative integer, got {:?}", self.value),
            )),
        }
    }

    fn u32(&self, key: &str) -> Result<u32, CliError> {
        let v = self.u64(key)?;
        u32::try_from(v).map_err(|_| self.parse_err(key, format!("{v} is too large")))
    }

    fn bool(&self, key: &str) -> Result<bool, CliError> {
        match self.value.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(self.parse_err(key, format!("expected true or false, got {:?}", self.value))),
        }
    }

    /// A number or a ratio such as `1/600`.
    fn ratio(&self, key: &str) -> Result<f64, CliError> {
        match self.value.split_once('/') {
            Some((a, b)) => {
                let num: f64 = a.trim().parse().map_err(|_| self.parse_err(key, "bad numerator"))?;
                let den: f64 = b.trim().parse().map_err(|_| self.parse_err(key, "bad denominator"))?;
                Ok(num / den)
            }
            None => self.f64(key),
        }
    }

    fn list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.value
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| self.parse_err(key, format!("bad frequency {s:?}")))
            })
            .collect()
    }
}

const GLOBAL_KEYS: &[&str] = &[
    "protocol",
    "grid.f_lo",
    "grid.f_hi",
    "grid.n_points",
    "grid.points",
    "clocks.f_s",
    "clocks.f_clk",
    "clocks.f_dds_clk",
    "clocks.fcw_bits",
    "adc.v_dd",
    "adc.bits",
    "adc.ideal",
    "excitation.dds_vpp",
    "excitation.v0",
    "excitation.phi_deg",
    "excitation.v_mid",
    "reference.n_in",
    "reference.noise_rms",
    "reference.seed",
    "rheostat.r_max",
    "rheostat.r_min",
    "rheostat.r_a",
    "calibration.alpha",
    "controller.overhead_s",
];

const CHANNEL_FIELDS: &[&str] = &[
    "id",
    "model",
    "r_s",
    "r_f",
    "c_dl",
    "r",
    "table",
    "n_out",
    "assumed_n_out",
    "readout_sign",
    "noise_rms",
    "glitch",
    "seed",
];

/// Parsed key/value pairs, before interpretation.
#[derive(Debug, Default)]
struct RawConfig {
    globals: BTreeMap<String, Entry>,
    channels: BTreeMap<String, BTreeMap<String, Entry>>,
}

fn tokenize(text: &str) -> Result<RawConfig, CliError> {
    let mut raw = RawConfig::default();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(CliError::Parse {
                line: line_no,
                key: content.to_string(),
                message: "expected `key = value`".into(),
            });
        };
        let key = key.trim();
        let entry = Entry {
            line: line_no,
            value: value.trim().to_string(),
        };
        let slot = if let Some(rest) = key.strip_prefix("channel.") {
            let Some((label, field)) = rest.rsplit_once('.') else {
                return Err(entry.parse_err(key, "channel keys look like channel.<label>.<field>"));
            };
            if label.is_empty() || !CHANNEL_FIELDS.contains(&field) {
                return Err(entry.parse_err(key, "unknown channel key"));
            }
            raw.channels
                .entry(label.to_string())
                .or_default()
                .entry(field.to_string())
        } else if GLOBAL_KEYS.contains(&key) {
            raw.globals.entry(key.to_string())
        } else {
            return Err(entry.parse_err(key, "unknown key"));
        };
        match slot {
            std::collections::btree_map::Entry::Occupied(prev) => {
                return Err(entry.parse_err(
                    key,
                    format!("duplicate key, first set on line {}", prev.get().line),
                ));
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(entry);
            }
        }
    }
    Ok(raw)
}

/// Reads a configuration file, applying `HERMEIS_SEED` if set.
pub fn parse_config(path: &Path) -> Result<SweepConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let seed = match std::env::var(SEED_ENV) {
        Ok(s) => Some(s.trim().parse::<u64>().map_err(|_| {
            CliError::Validation(format!("{SEED_ENV} must be an unsigned integer, got {s:?}"))
        })?),
        Err(_) => None,
    };
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base, seed)
}

/// Parses configuration text. Relative table paths resolve against `base_dir`.
/// A `seed_override` replaces the reference seed and gives channel `id` the
/// seed `override + id`.
pub fn parse_config_str(
    text: &str,
    base_dir: &Path,
    seed_override: Option<u64>,
) -> Result<SweepConfig, CliError> {
    let raw = tokenize(text)?;
    let g = &raw.globals;
    let get = |k: &str| g.get(k);

    let grid = parse_grid(g)?;
    let protocol = match get("protocol") {
        None => Vec::new(),
        Some(e) => match e.value.as_str() {
            "control" => control_protocol(),
            "varying_cdl" => varying_cdl_protocol(),
            "varying_rf" => varying_rf_protocol(),
            other => {
                return Err(e.parse_err(
                    "protocol",
                    format!("unknown protocol {other:?}; expected control, varying_cdl or varying_rf"),
                ))
            }
        },
    };
    let channels = build_channels(protocol, &raw.channels, base_dir)?;

    let mut cfg = SweepConfig::new(grid, channels);
    macro_rules! set {
        ($key:literal, $field:expr, $conv:ident) => {
            if let Some(e) = get($key) {
                $field = e.$conv($key)?;
            }
        };
    }
    set!("clocks.f_s", cfg.clocks.f_s, u64);
    set!("clocks.f_clk", cfg.clocks.f_clk, u64);
    set!("clocks.f_dds_clk", cfg.clocks.f_dds_clk, u64);
    set!("clocks.fcw_bits", cfg.clocks.fcw_bits, u32);
    set!("adc.v_dd", cfg.adc.v_dd, f64);
    set!("adc.bits", cfg.adc.bits, u32);
    set!("adc.ideal", cfg.adc.ideal, bool);
    set!("excitation.dds_vpp", cfg.dds_vpp, f64);
    set!("excitation.v0", cfg.v0, f64);
    set!("excitation.v_mid", cfg.v_mid, f64);
    set!("reference.n_in", cfg.n_in, u32);
    set!("reference.noise_rms", cfg.reference_noise_rms, f64);
    set!("reference.seed", cfg.reference_seed, u64);
    set!("rheostat.r_max", cfg.rheostat.r_max, f64);
    set!("rheostat.r_min", cfg.rheostat.r_min, f64);
    set!("rheostat.r_a", cfg.rheostat.r_a, f64);
    set!("controller.overhead_s", cfg.controller_overhead_s, f64);
    if let Some(e) = get("excitation.phi_deg") {
        cfg.phi = e.f64("excitation.phi_deg")?.to_radians();
    }
    if let Some(e) = get("calibration.alpha") {
        cfg.cal = CalibrationConfig {
            alpha: e.ratio("calibration.alpha")?,
        };
    }

    if let Some(seed) = seed_override {
        cfg.reference_seed = seed;
        for ch in &mut cfg.channels {
            ch.rng_seed = seed.wrapping_add(ch.id as u64);
        }
    }
    cfg.validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(cfg)
}

fn parse_grid(g: &BTreeMap<String, Entry>) -> Result<Vec<f64>, CliError> {
    if let Some(e) = g.get("grid.points") {
        if ["grid.f_lo", "grid.f_hi", "grid.n_points"]
            .iter()
            .any(|k| g.contains_key(*k))
        {
            return Err(e.parse_err(
                "grid.points",
                "give either grid.points or grid.f_lo/f_hi/n_points, not both",
            ));
        }
        return e.list("grid.points");
    }
    let need = |k: &str| {
        g.get(k)
            .ok_or_else(|| CliError::Validation(format!("missing required key {k}")))
    };
    let f_lo = need("grid.f_lo")?.f64("grid.f_lo")?;
    let f_hi = need("grid.f_hi")?.f64("grid.f_hi")?;
    let n = need("grid.n_points")?.u64("grid.n_points")? as usize;
    log_grid(f_lo, f_hi, n).map_err(|e| CliError::Validation(e.to_string()))
}

fn build_channels(
    protocol: Vec<ChannelConfig>,
    raw: &BTreeMap<String, BTreeMap<String, Entry>>,
    base_dir: &Path,
) -> Result<Vec<ChannelConfig>, CliError> {
    let mut by_label: BTreeMap<String, ChannelConfig> = protocol
        .into_iter()
        .map(|c| (c.id.to_string(), c))
        .collect();
    for (label, fields) in raw {
        let channel = build_channel(label, fields, by_label.remove(label), base_dir)?;
        by_label.insert(label.clone(), channel);
    }
    let mut channels: Vec<ChannelConfig> = by_label.into_values().collect();
    channels.sort_by_key(|c| c.id);
    Ok(channels)
}

fn build_channel(
    label: &str,
    fields: &BTreeMap<String, Entry>,
    base: Option<ChannelConfig>,
    base_dir: &Path,
) -> Result<ChannelConfig, CliError> {
    let key = |f: &str| format!("channel.{label}.{f}");
    let get = |f: &str| fields.get(f);
    let any_line = fields.values().map(|e| e.line).min().unwrap_or(0);

    let id = match get("id") {
        Some(e) => e.u32(&key("id"))?,
        None => match &base {
            Some(b) => b.id,
            None => label.parse::<u32>().map_err(|_| CliError::Parse {
                line: any_line,
                key: key("id"),
                message: "non-numeric channel labels need an explicit id".into(),
            })?,
        },
    };

    let base_randles = match base.as_ref().map(|b| &b.dut) {
        Some(DutModel::Randles(m)) => Some(*m),
        _ => None,
    };
    let kind = match get("model") {
        Some(e) => e.value.clone(),
        None => match base.as_ref().map(|b| &b.dut) {
            Some(DutModel::Randles(_)) => "randles".into(),
            Some(DutModel::Resistor(_)) => "resistor".into(),
            Some(DutModel::Table(_)) => "table".into(),
            None => {
                return Err(CliError::Parse {
                    line: any_line,
                    key: key("model"),
                    message: "missing channel model".into(),
                })
            }
        },
    };
    let missing = |f: &str| CliError::Parse {
        line: any_line,
        key: key(f),
        message: format!("{kind} model needs {f}"),
    };
    let dut = match kind.as_str() {
        "randles" => {
            let part = |f: &str, fallback: Option<f64>| -> Result<f64, CliError> {
                match get(f) {
                    Some(e) => e.f64(&key(f)),
                    None => fallback.ok_or_else(|| missing(f)),
                }
            };
            DutModel::Randles(RandlesModel {
                r_s: part("r_s", base_randles.map(|m| m.r_s))?,
                r_f: part("r_f", base_randles.map(|m| m.r_f))?,
                c_dl: part("c_dl", base_randles.map(|m| m.c_dl))?,
            })
        }
        "resistor" => match (get("r"), &base) {
            (Some(e), _) => DutModel::Resistor(e.f64(&key("r"))?),
            (None, Some(ChannelConfig { dut: d @ DutModel::Resistor(_), .. })) => d.clone(),
            _ => return Err(missing("r")),
        },
        "table" => match (get("table"), &base) {
            (Some(e), _) => {
                let path = base_dir.join(&e.value);
                DutModel::Table(read_table(&path)?)
            }
            (None, Some(ChannelConfig { dut: d @ DutModel::Table(_), .. })) => d.clone(),
            _ => return Err(missing("table")),
        },
        other => {
            let e = get("model").expect("model given explicitly");
            return Err(e.parse_err(
                &key("model"),
                format!("unknown model {other:?}; expected randles, resistor or table"),
            ));
        }
    };

    let mut ch = match base {
        Some(b) => ChannelConfig { id, dut, ..b },
        None => ChannelConfig::new(id, dut),
    };
    if let Some(e) = get("n_out") {
        ch.n_out = e.u32(&key("n_out"))?;
    }
    if let Some(e) = get("assumed_n_out") {
        ch.assumed_n_out = Some(e.u32(&key("assumed_n_out"))?);
    }
    if let Some(e) = get("readout_sign") {
        ch.readout_sign = match e.value.as_str() {
            "inverting" => ReadoutSign::Inverting,
            "non_inverting" => ReadoutSign::NonInverting,
            _ => {
                return Err(e.parse_err(
                    &key("readout_sign"),
                    "expected inverting or non_inverting",
                ))
            }
        };
    }
    if let Some(e) = get("noise_rms") {
        ch.noise_rms = e.f64(&key("noise_rms"))?;
    }
    if let Some(e) = get("glitch") {
        ch.first_cycle_glitch = e.f64(&key("glitch"))?;
    }
    if let Some(e) = get("seed") {
        ch.rng_seed = e.u64(&key("seed"))?;
    }
    Ok(ch)
}

/// Reads `freq_hz, re_ohm, im_ohm` rows. A non-numeric first row is a header.
pub fn read_table(path: &Path) -> Result<ImpedanceTable, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: PathBuf::from(path),
        source,
    })?;
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let nums: Option<Vec<f64>> = fields.iter().map(|s| s.parse().ok()).collect();
        match nums {
            Some(v) if v.len() == 3 => points.push((v[0], Complex64::new(v[1], v[2]))),
            None if points.is_empty() && idx == 0 => continue,
            _ => {
                return Err(CliError::Parse {
                    line: idx + 1,
                    key: path.display().to_string(),
                    message: "table rows are `freq_hz, re_ohm, im_ohm`".into(),
                })
            }
        }
    }
    ImpedanceTable::new(points).map_err(|e| CliError::Validation(e.to_string()))
}
