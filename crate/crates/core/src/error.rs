use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Requested frequency cannot be produced or sampled by the modeled hardware.
    #[error("frequency {freq_hz} Hz outside band [{lo_hz}, {hi_hz}] Hz")]
    Band { freq_hz: f64, lo_hz: f64, hi_hz: f64 },

    /// The adaptive-rate rule could not fit four samples into one period.
    #[error("cannot plan {freq_hz} Hz: {reason}")]
    Plan { freq_hz: f64, reason: String },

    #[error("invalid clock configuration: {0}")]
    Clock(String),

    /// A 7-bit rheostat code outside 0..=127.
    #[error("rheostat code {0} outside 0..=127")]
    Range(i64),

    /// A stream is shorter than the cycle being reduced.
    #[error("stream has {available} samples, need {required}")]
    Length { available: usize, required: usize },

    /// Every sample of the final cycle clipped; the output gain is unusable.
    #[error("channel {channel} saturated: every steady-state sample clipped")]
    Saturation { channel: u32 },

    /// Zero-magnitude response where a ratio is required.
    #[error("degenerate response: |X| = 0")]
    Degenerate,

    /// The plan's period does not fit the 32-bit accumulator at any fraction width.
    #[error("period of {period} samples exceeds accumulator headroom ({max_period} max)")]
    Budget { period: f64, max_period: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
