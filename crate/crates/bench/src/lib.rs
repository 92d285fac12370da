//! Fixtures shared by the pipeline benchmarks.

use hermeis_core::sweep::control_protocol;
use hermeis_core::{
    channel_stream, log_grid, plan_sampling, AdcSpec, ChannelConfig, ClockConfig, DutModel,
    RandlesModel, RheostatSpec, SampleStream, SamplingPlan, SweepConfig,
};

pub fn plan(freq_hz: f64) -> SamplingPlan {
    plan_sampling(freq_hz, &ClockConfig::default()).expect("frequency in band")
}

pub fn control_channel() -> ChannelConfig {
    ChannelConfig::new(
        1,
        DutModel::Randles(RandlesModel::new(3.9e3, 100e3, 68e-9).expect("positive parts")),
    )
}

/// Two cycles of the control cell at `freq_hz`.
pub fn control_stream(freq_hz: f64, ideal: bool) -> SampleStream {
    let cfg = SweepConfig::new(vec![freq_hz], vec![control_channel()]);
    let adc = AdcSpec {
        ideal,
        ..AdcSpec::default()
    };
    channel_stream(
        &cfg.channels[0],
        &cfg.excitation().expect("default excitation"),
        &plan(freq_hz),
        2,
        &RheostatSpec::default(),
        &adc,
        0,
    )
    .expect("unsaturated")
}

/// Four control channels over `points` frequencies from 10 Hz to 50 kHz.
pub fn small_sweep(points: usize) -> SweepConfig {
    SweepConfig::new(
        log_grid(10.0, 5e4, points).expect("valid grid"),
        control_protocol(),
    )
}
