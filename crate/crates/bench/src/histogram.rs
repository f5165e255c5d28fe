/// Latency above this many nanoseconds marks a run as did-not-finish.
pub const DNF_THRESHOLD_NS: u64 = 1_000_000_000;

/// Latency counts in power-of-two bins: bin `b` holds `[2^b, 2^(b+1))`
/// nanoseconds, with 0 and 1 both in bin 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatencyHistogram {
    bins: [u64; 64],
    count: u64,
    max: u64,
    dnf: bool,
}

impl Default for LatencyHistogram {
    fn default() -> Self {
        Self::new()
    }
}

pub fn bin_of(nanos: u64) -> usize {
    if nanos == 0 {
        0
    } else {
        63 - nanos.leading_zeros() as usize
    }
}

impl LatencyHistogram {
    pub fn new() -> Self {
        LatencyHistogram { bins: [0; 64], count: 0, max: 0, dnf: false }
    }

    /// Records one latency. Negative values (early completions) count as 0.
    pub fn record(&mut self, nanos: i64) {
        self.record_n(nanos, 1);
    }

    pub fn record_n(&mut self, nanos: i64, times: u64) {
        if times == 0 {
            return;
        }
        let nanos = nanos.max(0) as u64;
        self.bins[bin_of(nanos)] += times;
        self.count += times;
        self.max = self.max.max(nanos);
        if nanos > DNF_THRESHOLD_NS {
            self.dnf = true;
        }
    }

    pub fn merge(&mut self, other: &LatencyHistogram) {
        for (a, b) in self.bins.iter_mut().zip(other.bins.iter()) {
            *a += b;
        }
        self.count += other.count;
        self.max = self.max.max(other.max);
        self.dnf |= other.dnf;
    }

    /// Marks the run as failed without a sample, e.g. when work was still
    /// outstanding past the threshold at shutdown.
    pub fn mark_dnf(&mut self) {
        self.dnf = true;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn max(&self) -> u64 {
        self.max
    }

    pub fn is_dnf(&self) -> bool {
        self.dnf
    }

    pub fn bin_count(&self, bin: usize) -> u64 {
        self.bins[bin]
    }

    /// The upper bound of the bin holding the `q`-quantile sample, or `None`
    /// if nothing was recorded.
    pub fn quantile(&self, q: f64) -> Option<u64> {
        if self.count == 0 {
            return None;
        }
        let rank = ((q.clamp(0.0, 1.0) * self.count as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (bin, n) in self.bins.iter().enumerate() {
            seen += n;
            if seen >= rank {
                return Some(1u64.checked_shl(bin as u32 + 1).unwrap_or(u64::MAX));
            }
        }
        unreachable!("rank never exceeds count")
    }
}
