//! Simulator for single-cycle, quarter-integration I/Q impedance spectroscopy
//! on a multichannel potentiostat.
//!
//! The pipeline runs frequency planning ([`freq_plan`]), excitation synthesis
//! ([`dds`]), the analog front end and ADC ([`afe`]), quarter-cycle
//! fixed-point integration ([`iq`]), impedance recovery ([`spectrum`]) and
//! full sweeps ([`sweep`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod afe;
pub mod dds;
pub mod error;
pub mod freq_plan;
pub mod iq;
pub mod spectrum;
pub mod sweep;

/// Exact rational used for sample periods and quarter boundaries.
pub type Rational = num_rational::Ratio<i128>;

pub use afe::{
    adc_quantize, channel_stream, randles_impedance, reference_amplitude, rheostat_resistance,
    AdcSpec, ChannelConfig, CycleSamples, DutModel, ImpedanceTable, RandlesModel, ReadoutSign,
    RheostatSpec, SampleStream, Samples,
};
pub use dds::{excitation_sample, reference_stream, ExcitationSpec, ReferenceNoise};
pub use error::{Error, Result};
pub use freq_plan::{
    compute_fcw, compute_fcw_unchecked, plan_sampling, quarter_boundaries, ClockConfig, Fcw,
    QuarterBoundary, SamplingPlan,
};
pub use iq::{
    iq_from_sums, overflow_budget, quarter_sums, reduce_cycle, IQAccumulator, OverflowBudget,
    QuarterIntegrator, QuarterSums,
};
pub use spectrum::{
    dft_oracle, impedance_point, intermediary, rc_corner, CalibrationConfig, ChannelRole, ComplexResponse,
    ImpedanceEstimate, RcCorner, SpectrumFlags, SpectrumPoint,
};
pub use sweep::{
    acquisition_time, channel_capacity, log_grid, run_sweep, run_sweep_with, Schedule,
    SweepConfig, SweepResult,
};
