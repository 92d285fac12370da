//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use hermeis_cli::verify::{verify_sweep, PointError, Tolerances, WELL_SAMPLED_PERIOD};
use hermeis_cli::spectrum_csv;
use hermeis_core::iq::QuarterIntegrator;
use hermeis_core::spectrum::{nyquist_apex_hz, phase_crossing_hz, rc_corner, wrap_degrees};
use hermeis_core::sweep::{
    control_protocol, paper_grid, varying_cdl_protocol, varying_rf_protocol,
};
use hermeis_core::{
    acquisition_time, channel_capacity, compute_fcw, dft_oracle, iq_from_sums, intermediary,
    log_grid, plan_sampling, reference_amplitude, rheostat_resistance, run_sweep_with,
    CalibrationConfig, ChannelConfig, ChannelRole, ClockConfig, CycleSamples, DutModel, Rational,
    RheostatSpec, Schedule, SpectrumPoint, SweepConfig, SweepResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }
}

fn sweep(channels: Vec<ChannelConfig>, ideal: bool, schedule: Schedule) -> (SweepResult, f64) {
    let mut cfg = SweepConfig::new(paper_grid(), channels);
    cfg.adc.ideal = ideal;
    cfg.cal = CalibrationConfig::identity();
    let start = Instant::now();
    let result = run_sweep_with(&cfg, schedule).expect("sweep runs");
    (result, start.elapsed().as_secs_f64())
}

fn worst(records: &[&PointError]) -> (f64, f64) {
    records.iter().fold((0.0f64, 0.0f64), |(m, p), r| {
        (m.max(r.mag_rel_err), p.max(r.phase_err_deg))
    })
}

fn c1_ideal_accuracy() -> Outcome {
    let (result, wall) = sweep(control_protocol(), true, Schedule::Parallel);
    let report = verify_sweep(&result, &Tolerances::default()).expect("analytic models");
    let (fine, coarse): (Vec<&PointError>, Vec<&PointError>) = report
        .records
        .iter()
        .partition(|r| r.point.period_samples >= WELL_SAMPLED_PERIOD);
    let (fm, fp) = worst(&fine);
    let (cm, cp) = worst(&coarse);
    let pass = report.passed
        && report.records.len() == 400
        && fm <= 0.02
        && fp <= 2.0
        && cm <= 0.10
        && cp <= 5.0
        && wall <= 60.0;
    let mut o = Outcome::new(
        pass,
        format!(
            "ideal control sweep: P>=64 worst {:.2e} / {:.2e} deg ({} pts), P<64 worst {:.2e} / {:.2e} deg ({} pts), wall {wall:.1} s",
            fm,
            fp,
            fine.len(),
            cm,
            cp,
            coarse.len()
        ),
    );
    o.details.push("bounds: 2% / 2 deg for P >= 64, 10% / 5 deg below, wall <= 60 s".into());
    o
}

fn c2_quantized_accuracy() -> Outcome {
    let (result, _) = sweep(control_protocol(), false, Schedule::Parallel);
    let report = verify_sweep(&result, &Tolerances::default()).expect("analytic models");
    let o = &report.overall;
    let flagged = result.points.iter().filter(|p| p.flags.clipped || p.flags.overflow).count();
    let pass = report.passed && o.median_mag <= 0.05 && o.median_phase <= 3.0;
    let mut out = Outcome::new(
        pass,
        format!(
            "10-bit control sweep: median |Z| err {:.3}%, median phase err {:.3} deg over {} pts",
            100.0 * o.median_mag,
            o.median_phase,
            o.count
        ),
    );
    out.details.push(format!(
        "max {:.2}% / {:.2} deg; {flagged} clipped or overflowed points; bounds 5% / 3 deg",
        100.0 * o.max_mag,
        o.max_phase
    ));
    out
}

struct Corner {
    id: u32,
    expected: f64,
    fitted: f64,
    apex: Option<f64>,
    crossing: Option<f64>,
}

fn corners(result: &SweepResult, channels: &[ChannelConfig]) -> Vec<Corner> {
    channels
        .iter()
        .map(|ch| {
            let DutModel::Randles(m) = &ch.dut else { unreachable!() };
            let pts: Vec<SpectrumPoint> = result.channel_points(ch.id);
            Corner {
                id: ch.id,
                expected: m.corner_hz(),
                fitted: rc_corner(&pts).map_or(f64::NAN, |c| c.corner_hz),
                apex: nyquist_apex_hz(&pts),
                crossing: phase_crossing_hz(&pts, -45.0),
            }
        })
        .collect()
}

fn c3_corners() -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    let mut worst_err = 0.0f64;
    let show = |f: Option<f64>| f.map_or("none".to_string(), |f| format!("{f:.3} Hz"));
    for (name, channels) in [
        ("varying C_dl", varying_cdl_protocol()),
        ("varying R_F", varying_rf_protocol()),
    ] {
        let (result, _) = sweep(channels.clone(), false, Schedule::Parallel);
        for c in corners(&result, &channels) {
            let err = ((c.fitted - c.expected) / c.expected).abs();
            worst_err = worst_err.max(if err.is_nan() { f64::INFINITY } else { err });
            pass &= err <= 0.10;
            details.push(format!(
                "{name} ch{}: expected {:.3} Hz, recovered {:.3} Hz ({:+.2}%); arc apex {}, total-phase -45 deg crossing {}",
                c.id,
                c.expected,
                c.fitted,
                100.0 * (c.fitted - c.expected) / c.expected,
                show(c.apex),
                show(c.crossing),
            ));
        }
    }
    let mut o = Outcome::new(
        pass,
        format!(
            "RC-branch -45 deg corners of both protocols from 10-bit sweeps: worst error {:.2}% (bound 10%)",
            100.0 * worst_err
        ),
    );
    o.details = details;
    o
}

fn c4_oracle_equivalence() -> Outcome {
    let clocks = ClockConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4e15);
    let (mut worst_mag, mut worst_phase) = (0.0f64, 0.0f64);
    let mut min_period = f64::INFINITY;
    let trials = 1000;
    for trial in 0..trials {
        // half from real plans, half from arbitrary rational periods
        let plan = if trial % 2 == 0 {
            let f = 10f64.powf(rng.random_range(1.0..3.49));
            plan_sampling(f, &clocks).expect("in band")
        } else {
            let mut plan = plan_sampling(1000.0, &clocks).expect("in band");
            let den: i128 = rng.random_range(1..5000);
            let num: i128 = rng.random_range(64 * den..4000 * den);
            plan.period = Rational::new(num, den);
            plan.cycle_len = plan.period.ceil().to_integer() as usize;
            plan
        };
        let period = plan.period_f64();
        if period < 64.0 {
            continue;
        }
        min_period = min_period.min(period);
        let amplitude = rng.random_range(1.0..500.0);
        let phi = rng.random_range(-PI..PI);
        let offset = rng.random_range(0.0..1023.0);
        let samples: Vec<f64> = (0..plan.cycle_len)
            .map(|n| offset + amplitude * (2.0 * PI * plan.phase_fraction(n) + phi).sin())
            .collect();
        let cycle = CycleSamples::Ideal(&samples);

        let sums = QuarterIntegrator::new(&plan).sums(cycle, 0).expect("full cycle");
        let iq = iq_from_sums(&sums, plan.effective_rate_hz());
        let x = intermediary(&iq, ChannelRole::Reference).expect("nonzero");
        // |X| = A P / pi for a sine of amplitude A
        let mag_iq = x.x.norm() * PI / period;
        let (mag_dft, phase_dft) = dft_oracle(cycle, &plan).expect("full cycle");
        worst_mag = worst_mag.max(((mag_iq - mag_dft) / mag_dft).abs());
        worst_phase = worst_phase.max(wrap_degrees(x.phase_deg() - phase_dft).abs());
    }
    Outcome::new(
        worst_mag <= 0.005 && worst_phase <= 0.5,
        format!(
            "{trials} random ideal streams (P >= {min_period:.1}): worst |X| disagreement {:.4}%, phase {:.4} deg (bounds 0.5% / 0.5 deg)",
            100.0 * worst_mag,
            worst_phase
        ),
    )
}

fn bit_identical(a: &SweepResult, b: &SweepResult) -> bool {
    let key = |p: &SpectrumPoint| {
        [
            p.freq_hz,
            p.freq_actual_hz,
            p.z_mag_raw,
            p.z_mag_cal,
            p.z_phase,
            p.i_acc,
            p.q_acc,
            p.period_samples,
        ]
        .map(f64::to_bits)
    };
    a.points.len() == b.points.len()
        && a.points.iter().zip(&b.points).all(|(p, q)| {
            key(p) == key(q) && p.channel_id == q.channel_id && p.flags == q.flags
        })
        && a.frequencies == b.frequencies
        && a.timing.nominal_s.to_bits() == b.timing.nominal_s.to_bits()
        && a.timing.modeled_s.to_bits() == b.timing.modeled_s.to_bits()
}

fn c5_dc_and_glitch() -> Outcome {
    let clocks = ClockConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xdc);
    let mut worst_ratio = 0.0f64;
    for _ in 0..500 {
        let f = 10f64.powf(rng.random_range(0.0..4.69));
        let plan = plan_sampling(f, &clocks).expect("in band");
        let integrator = QuarterIntegrator::new(&plan);
        let budget = hermeis_core::overflow_budget(&plan, 10);
        let code: u16 = rng.random_range(1..=1023);
        let codes = vec![code; plan.cycle_len];
        let ideal = vec![code as f64; plan.cycle_len];
        for (sums, c) in [
            (integrator.sums(CycleSamples::Codes(&codes), budget.frac_bits), code as f64),
            (integrator.sums(CycleSamples::Ideal(&ideal), 0), code as f64),
        ] {
            let iq = iq_from_sums(&sums.expect("full cycle"), plan.effective_rate_hz());
            // bound: two edge samples of the constant
            let ratio = iq.i_scaled.abs().max(iq.q_scaled.abs()) / (2.0 * c);
            worst_ratio = worst_ratio.max(ratio);
        }
    }

    let grid = log_grid(0.5, 5e4, 25).expect("grid");
    let mut identical = true;
    let mut clipped_first = 0;
    for ideal in [false, true] {
        let base_cfg = {
            let mut cfg = SweepConfig::new(grid.clone(), control_protocol());
            cfg.adc.ideal = ideal;
            for ch in &mut cfg.channels {
                ch.noise_rms = 1e-3;
            }
            cfg.reference_noise_rms = 5e-4;
            cfg
        };
        let base = run_sweep_with(&base_cfg, Schedule::Parallel).expect("sweep");
        for glitch in [-2.0, -0.4, 0.013, 0.25, 1.7, 40.0] {
            let mut cfg = base_cfg.clone();
            for ch in &mut cfg.channels {
                ch.first_cycle_glitch = glitch;
            }
            let glitched = run_sweep_with(&cfg, Schedule::Parallel).expect("sweep");
            identical &= bit_identical(&base, &glitched);
            identical &= spectrum_csv(&base.points) == spectrum_csv(&glitched.points);
            if glitch.abs() > 1.0 {
                clipped_first += 1;
            }
        }
    }
    let pass = worst_ratio <= 1.0 && identical;
    let mut o = Outcome::new(
        pass,
        format!(
            "constant streams: worst |I|,|Q| at {:.2e} of the two-edge-sample bound; glitched sweeps bit-identical: {identical}",
            worst_ratio
        ),
    );
    o.details.push(format!(
        "500 random (P, code) pairs on both integrator paths; 12 glitch values, {clipped_first} of them driving the first cycle into the rails"
    ));
    o
}

fn c6_anchors() -> Outcome {
    let clocks = ClockConfig::default();
    let rheo = RheostatSpec::default();
    let fcw = compute_fcw(1000.0, &clocks).expect("in band").word;
    let r10 = rheostat_resistance(10, &rheo).expect("code");
    let r100 = rheostat_resistance(100, &rheo).expect("code");
    let vref = reference_amplitude(10, 1.0, &rheo).expect("code");
    let cap = channel_capacity(38.1e6, 8.0).expect("positive");
    let pass = fcw == 42950
        && (r10 - 4037.0).abs() < 0.05
        && (r100 - 39470.1).abs() < 0.05
        && (vref - 0.040).abs() / 0.040 < 0.01
        && cap == 4_762_500;
    Outcome::new(
        pass,
        format!(
            "FCW(1 kHz) = {fcw}, rheostat(10) = {r10:.3} ohm, rheostat(100) = {r100:.3} ohm, V_ref = {:.2} mVpp, capacity = {cap}",
            1e3 * vref
        ),
    )
}

fn c7_timing() -> Outcome {
    let mut cfg = SweepConfig::new(paper_grid(), control_protocol());
    cfg.controller_overhead_s = 0.0;
    let total = acquisition_time(&cfg);
    let (f_lo, f_hi, n) = (0.05f64, 5e4f64, 100);
    let r = (f_hi / f_lo).powf(1.0 / (n - 1) as f64);
    let closed = 2.0 / f_lo * (1.0 - r.powi(-n)) / (1.0 - 1.0 / r);
    let mut single = cfg.clone();
    single.grid = vec![0.05];
    let lowest = acquisition_time(&single);
    let rel = ((total - closed) / closed).abs();
    let pass = rel <= 1e-3 && (total - 307.0).abs() / 307.0 <= 1e-3 && lowest == 40.0;
    Outcome::new(
        pass,
        format!(
            "acquisition_time = {total:.4} s vs geometric sum {closed:.4} s (rel {rel:.1e}); lowest point {lowest} s"
        ),
    )
}

fn c8_determinism() -> Outcome {
    let grid = log_grid(0.5, 5e4, 30).expect("grid");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .expect("thread pool");
    let mut checks = Vec::new();
    for (name, channels) in [
        ("control", control_protocol()),
        ("varying C_dl", varying_cdl_protocol()),
        ("varying R_F", varying_rf_protocol()),
    ] {
        let mut cfg = SweepConfig::new(grid.clone(), channels);
        cfg.reference_noise_rms = 5e-4;
        cfg.reference_seed = 17;
        for ch in &mut cfg.channels {
            ch.noise_rms = 2e-3;
            ch.rng_seed = 100 + ch.id as u64;
        }
        let csv = |cfg: &SweepConfig, schedule| {
            let result = run_sweep_with(cfg, schedule).expect("sweep");
            spectrum_csv(&result.points).into_bytes()
        };
        let parallel = pool.install(|| csv(&cfg, Schedule::Parallel));
        let repeat = pool.install(|| csv(&cfg, Schedule::Parallel));
        let sequential = csv(&cfg, Schedule::Sequential);
        let mut permuted = cfg.clone();
        permuted.channels.reverse();
        permuted.channels.swap(0, 2);
        let reordered = pool.install(|| csv(&permuted, Schedule::Parallel));
        checks.push((name, parallel == repeat, parallel == sequential, parallel == reordered));
    }
    let pass = checks.iter().all(|c| c.1 && c.2 && c.3);
    let mut o = Outcome::new(
        pass,
        "noisy sweeps on all three protocols: repeat, schedule and channel-order CSVs byte-identical"
            .to_string(),
    );
    if !pass {
        o.summary = "byte-identity violated".into();
    }
    for (name, repeat, schedule, order) in checks {
        o.details.push(format!(
            "{name}: repeat {repeat}, 4-thread vs sequential {schedule}, permuted channels {order}"
        ));
    }
    o
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("1 end-to-end accuracy", c1_ideal_accuracy),
        ("2 quantized accuracy", c2_quantized_accuracy),
        ("3 protocol discrimination", c3_corners),
        ("4 oracle equivalence", c4_oracle_equivalence),
        ("5 DC rejection / cycle discard", c5_dc_and_glitch),
        ("6 numeric anchors", c6_anchors),
        ("7 acquisition time", c7_timing),
        ("8 determinism", c8_determinism),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {name}: {} ({:.1} s)",
            o.summary,
            start.elapsed().as_secs_f64()
        );
        for d in &o.details {
            println!("       {d}");
        }
        failures += usize::from(!o.pass);
    }
    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
