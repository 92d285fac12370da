use std::path::Path;
use std::process::Command;

use hermeis_cli::verify::{report_csv, verify_sweep, Mode};
use hermeis_cli::{
    format_g, parse_config_str, parse_spectrum_csv, plan_text, spectrum_csv, CliError, Tolerances,
};
use hermeis_core::{run_sweep, ClockConfig, DutModel, SpectrumFlags, SpectrumPoint};
use proptest::prelude::*;

const BIN: &str = env!("CARGO_BIN_EXE_hermeis");

const CONTROL_SMALL: &str = "
protocol = control
grid.f_lo = 10
grid.f_hi = 20000
grid.n_points = 7
adc.ideal = true
calibration.alpha = 1
";

fn parse(text: &str) -> hermeis_core::SweepConfig {
    parse_config_str(text, Path::new("."), None).unwrap()
}

#[test]
fn plan_text_shows_divider() {
    let text = plan_text(3000.0, &ClockConfig::default(), 10).unwrap();
    assert!(text.contains("adaptive f_s'     192000 Hz"), "{text}");
    assert!(text.contains("divider k         260"), "{text}");
    assert!(text.contains("fcw m             128849"), "{text}");
    let low = plan_text(0.05, &ClockConfig::default(), 10).unwrap();
    assert!(low.contains("F = 0 fractional bits"), "{low}");
    assert!(low.contains("4294967.3 samples"), "{low}");
    assert!(matches!(
        plan_text(0.01, &ClockConfig::default(), 10),
        Err(CliError::Core(hermeis_core::Error::Band { .. }))
    ));
}

#[test]
fn csv_rows_are_ordered_and_counted() {
    let mut cfg = parse(CONTROL_SMALL);
    cfg.channels.reverse();
    let result = run_sweep(&cfg).unwrap();
    let csv = spectrum_csv(&result.points);
    let rows = parse_spectrum_csv(&csv).unwrap();
    assert_eq!(csv.lines().count(), 1 + 7 * 4);
    assert_eq!(rows.len(), 28);
    for w in rows.windows(2) {
        assert!((w[0].freq_hz, w[0].channel) < (w[1].freq_hz, w[1].channel));
    }
    let one = parse("grid.points = 10, 100, 1000\nchannel.1.model = resistor\nchannel.1.r = 4700\n");
    let csv = spectrum_csv(&run_sweep(&one).unwrap().points);
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn verify_passes_control_and_catches_gain_mismatch() {
    let cfg = parse(CONTROL_SMALL);
    let report = verify_sweep(&run_sweep(&cfg).unwrap(), &Tolerances::default()).unwrap();
    assert_eq!(report.mode, Mode::PerPoint);
    assert!(report.passed, "{:?}", report.overall);
    assert_eq!(report_csv(&report).lines().count(), 29);

    // assumed R_out 20 % high: magnitudes read high by the same ratio
    let mismatched = parse(&format!("{CONTROL_SMALL}channel.2.assumed_n_out = 120\n"));
    let report = verify_sweep(&run_sweep(&mismatched).unwrap(), &Tolerances::default()).unwrap();
    assert!(!report.passed);
    let ratio = hermeis_core::rheostat_resistance(120, &Default::default()).unwrap()
        / hermeis_core::rheostat_resistance(100, &Default::default()).unwrap();
    for r in report.records.iter().filter(|r| r.point.channel_id == 2) {
        assert!((r.mag_rel_err - (ratio - 1.0)).abs() < 2e-3, "{}", r.mag_rel_err);
        assert!(!r.within);
    }
    assert!(report.records.iter().filter(|r| r.point.channel_id != 2).all(|r| r.within));
}

#[test]
fn verify_requires_analytic_models() {
    let mut cfg = parse(CONTROL_SMALL);
    cfg.channels[0].dut = DutModel::Table(
        hermeis_core::ImpedanceTable::new(vec![(1.0, num_complex::Complex64::new(5e3, -1e3))]).unwrap(),
    );
    let result = run_sweep(&cfg).unwrap();
    assert!(matches!(
        verify_sweep(&result, &Tolerances::default()),
        Err(CliError::MissingGroundTruth { channel: 1 })
    ));
}

#[test]
fn quantized_verify_uses_medians() {
    let cfg = parse(&CONTROL_SMALL.replace("adc.ideal = true", "adc.ideal = false"));
    let report = verify_sweep(&run_sweep(&cfg).unwrap(), &Tolerances::default()).unwrap();
    assert_eq!(report.mode, Mode::Median);
    assert!(report.passed, "{:?}", report.overall);
}

fn point(values: [f64; 7], channel: u32, flags: (bool, bool)) -> SpectrumPoint {
    SpectrumPoint {
        freq_hz: values[0],
        freq_actual_hz: values[1],
        channel_id: channel,
        z_mag_raw: values[2],
        z_mag_cal: values[3],
        z_phase: values[4],
        i_acc: values[5],
        q_acc: values[6],
        period_samples: 64.0,
        flags: SpectrumFlags {
            clipped: flags.0,
            overflow: flags.1,
            degenerate: false,
        },
    }
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 5e-9 * a.abs().max(b.abs())
}

proptest! {
    #[test]
    fn csv_round_trip(
        values in prop::array::uniform7(prop_oneof![
            -1e12..1e12f64,
            -1e-3..1e-3f64,
            (-300i32..300).prop_map(|e| 1.2345678912345 * 10f64.powi(e)),
        ]),
        channel in 0u32..1000,
        clipped: bool,
        overflow: bool,
    ) {
        let p = point(values, channel, (clipped, overflow));
        let rows = parse_spectrum_csv(&spectrum_csv(&[p])).unwrap();
        prop_assert_eq!(rows.len(), 1);
        let r = rows[0];
        let got = [r.freq_hz, r.freq_actual_hz, r.zmag_ohm_raw, r.zmag_ohm_cal, r.zphase_deg, r.i_acc, r.q_acc];
        for (g, v) in got.iter().zip(values) {
            prop_assert!(close(*g, v), "{} vs {}", g, v);
            // printing the parsed value again is a fixed point
            prop_assert_eq!(format_g(*g, 9), format_g(v, 9));
        }
        prop_assert_eq!((r.channel, r.clipped, r.overflow), (channel, clipped, overflow));
    }
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn binary_sweep_is_reproducible_and_seedable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "grid.points = 5, 50, 500, 5000\nreference.noise_rms = 1e-3\n\
         channel.1.model = randles\nchannel.1.r_s = 3900\nchannel.1.r_f = 100e3\n\
         channel.1.c_dl = 68e-9\nchannel.1.noise_rms = 2e-3\n",
    );
    let run = |out: &str, seed: Option<&str>| {
        let mut cmd = Command::new(BIN);
        cmd.args(["sweep", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join(out));
        cmd.env_remove("HERMEIS_SEED");
        if let Some(s) = seed {
            cmd.env("HERMEIS_SEED", s);
        }
        let status = cmd.status().unwrap();
        assert!(status.success());
        std::fs::read(dir.path().join(out)).unwrap()
    };
    let a = run("a.csv", None);
    assert_eq!(a, run("b.csv", None));
    let s1 = run("c.csv", Some("5"));
    assert_eq!(s1, run("d.csv", Some("5")));
    assert_ne!(a, s1);
    let rows = parse_spectrum_csv(std::str::from_utf8(&a).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");

    let ok = write_config(dir.path(), CONTROL_SMALL);
    let pass = Command::new(BIN).args(["verify", "--config"]).arg(&ok).arg("--out").arg(&out).output().unwrap();
    assert!(pass.status.success());
    assert!(String::from_utf8_lossy(&pass.stdout).contains("PASS"));

    let bad = write_config(dir.path(), &format!("{CONTROL_SMALL}channel.1.assumed_n_out = 90\n"));
    let fail = Command::new(BIN).args(["verify", "--config"]).arg(&bad).arg("--out").arg(&out).output().unwrap();
    assert_eq!(fail.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&fail.stdout).contains("FAIL"));

    let band = Command::new(BIN).args(["plan", "0.01"]).output().unwrap();
    assert_eq!(band.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&band.stderr).contains("outside band"));

    let cap = Command::new(BIN).args(["capacity", "--throughput", "38.1e6", "--pair-bytes", "8"]).output().unwrap();
    assert_eq!(String::from_utf8_lossy(&cap.stdout).trim(), "4762500");

    let invalid = write_config(dir.path(), "grid.points = 100000\nchannel.1.model = resistor\nchannel.1.r = 1\n");
    let res = Command::new(BIN).args(["sweep", "--config"]).arg(&invalid).arg("--out").arg(&out).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("invalid configuration"));
}
