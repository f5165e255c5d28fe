use thiserror::Error;

pub const MIN_EXPONENT: u32 = 8;
pub const MAX_EXPONENT: u32 = 21;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("quantum exponent {0} outside {MIN_EXPONENT}..={MAX_EXPONENT}")]
pub struct ExponentOutOfRange(pub u32);

/// Timestamp granularity: event times are rounded down to multiples of
/// `2^exponent` nanoseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantumConfig {
    exponent: u32,
}

impl QuantumConfig {
    pub fn new(exponent: u32) -> Result<Self, ExponentOutOfRange> {
        if (MIN_EXPONENT..=MAX_EXPONENT).contains(&exponent) {
            Ok(QuantumConfig { exponent })
        } else {
            Err(ExponentOutOfRange(exponent))
        }
    }

    /// Any exponent below 64, for coarse settings outside the swept range.
    pub fn new_unchecked(exponent: u32) -> Self {
        assert!(exponent < 64);
        QuantumConfig { exponent }
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn quantum(&self) -> u64 {
        1 << self.exponent
    }

    /// Upper bound on distinct timestamps per second of event time.
    pub fn max_timestamps_per_sec(&self) -> f64 {
        1e9 / self.quantum() as f64
    }

    pub fn quantize(&self, nanos: u64) -> u64 {
        nanos >> self.exponent << self.exponent
    }
}

/// Event times of a stream at `rate` per second for `duration_ns`, spaced
/// evenly, as `(event time, quantized time)`.
pub fn quantized_schedule(cfg: QuantumConfig, rate: u64, duration_ns: u64) -> impl Iterator<Item = (u64, u64)> {
    assert!(rate > 0, "rate must be positive");
    let count = (duration_ns as u128 * rate as u128 / 1_000_000_000) as u64;
    (0..count).map(move |i| {
        let at = (i as u128 * 1_000_000_000 / rate as u128) as u64;
        (at, cfg.quantize(at))
    })
}
