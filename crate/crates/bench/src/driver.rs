use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use tokenflow::runtime::{execute, Cluster, Config, ExternalInput, ProbeHandle, RuntimeError, Worker, WorkerStats};

use crate::dataflows::{build, Experiment};
use crate::histogram::{LatencyHistogram, DNF_THRESHOLD_NS};
use crate::quantum::QuantumConfig;
use crate::row::{Arm, ExperimentRow};

/// Distinct words in generated input.
pub const VOCABULARY: u64 = 1 << 16;

/// After injection stops, how long outstanding work may take to drain.
const DRAIN_GRACE: Duration = Duration::from_secs(2);

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub arm: Arm,
    pub workers: usize,
    pub rate_per_worker: u64,
    pub quantum: QuantumConfig,
    pub duration: Duration,
    /// Latency of records stamped before this is not recorded.
    pub warmup: Duration,
    /// Step all workers round-robin on one thread instead of one thread each.
    pub deterministic: bool,
}

/// Coordination counters summed over all workers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunCounters {
    pub steps: u64,
    pub invocations: u64,
    pub progress_batches_sent: u64,
    pub messages_sent: u64,
    pub safety_violations: u64,
}

impl RunCounters {
    fn add(&mut self, stats: &WorkerStats) {
        self.steps += stats.steps;
        self.invocations += stats.invocations;
        self.progress_batches_sent += stats.progress_batches_sent;
        self.messages_sent += stats.messages_sent;
        self.safety_violations += stats.safety_violations;
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub row: ExperimentRow,
    pub histogram: LatencyHistogram,
    pub counters: RunCounters,
    pub injected: u64,
}

/// Open-loop load for one worker: records are injected on a fixed schedule
/// of event times, whatever the state of the dataflow, and stamped with
/// their quantized event time. A record's latency is the time from its
/// timestamp until the output frontier passes it.
pub struct LoadGen {
    rate: u64,
    quantum: QuantumConfig,
    stop_ns: u64,
    warmup_ns: u64,
    sent: u64,
    next_event: u64,
    rng: SmallRng,
    pending: VecDeque<(u64, u64)>,
    pub histogram: LatencyHistogram,
}

impl LoadGen {
    pub fn new(config: &RunConfig, seed: u64) -> Self {
        LoadGen {
            rate: config.rate_per_worker,
            quantum: config.quantum,
            stop_ns: config.duration.as_nanos() as u64,
            warmup_ns: config.warmup.as_nanos() as u64,
            sent: 0,
            next_event: 0,
            rng: SmallRng::seed_from_u64(seed),
            pending: VecDeque::new(),
            histogram: LatencyHistogram::new(),
        }
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn finished_injecting(&self, now_ns: u64) -> bool {
        now_ns >= self.stop_ns
    }

    fn event_time(&self, index: u64) -> u64 {
        (index as u128 * 1_000_000_000 / self.rate as u128) as u64
    }

    /// Sends every record scheduled at or before `now_ns` and advances the
    /// input to the current quantum.
    pub fn inject(&mut self, input: &mut ExternalInput<u64, u64>, now_ns: u64) {
        let now = now_ns.min(self.stop_ns);
        while self.rate > 0 && self.next_event <= now && self.next_event < self.stop_ns {
            let time = self.quantum.quantize(self.next_event);
            if time > input.time() {
                input.advance_to(time).expect("schedule is monotone");
            }
            input.send(self.rng.gen_range(0..VOCABULARY));
            match self.pending.back_mut() {
                Some((t, n)) if *t == time => *n += 1,
                _ => self.pending.push_back((time, 1)),
            }
            self.sent += 1;
            self.next_event = self.event_time(self.sent);
        }
        let time = self.quantum.quantize(now);
        if time > input.time() {
            input.advance_to(time).expect("schedule is monotone");
        }
        input.flush();
    }

    /// Records latencies of every completed time. Returns false once some
    /// outstanding record is older than the failure threshold.
    pub fn observe(&mut self, probe: &ProbeHandle<u64>, now_ns: u64) -> bool {
        while let Some(&(time, n)) = self.pending.front() {
            if probe.less_equal(&time) {
                break;
            }
            if time >= self.warmup_ns {
                self.histogram.record_n(now_ns as i64 - time as i64, n);
            }
            self.pending.pop_front();
        }
        match self.pending.front() {
            Some(&(time, _)) if now_ns.saturating_sub(time) > DNF_THRESHOLD_NS => {
                self.histogram.mark_dnf();
                false
            }
            _ => true,
        }
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }
}

fn nanos_since(start: Instant) -> u64 {
    start.elapsed().as_nanos() as u64
}

/// Everything one worker needs to drive its share of the load.
struct Lane {
    input: Option<ExternalInput<u64, u64>>,
    probe: ProbeHandle<u64>,
    load: LoadGen,
    failed: bool,
}

impl Lane {
    /// Injects, then observes. Returns false once the lane has nothing left
    /// to do.
    fn tick(&mut self, now: u64) -> bool {
        if let Some(input) = self.input.as_mut() {
            self.load.inject(input, now);
            if self.load.finished_injecting(now) {
                self.input = None;
            }
        }
        if !self.load.observe(&self.probe, now) {
            self.failed = true;
        }
        !self.failed && (self.input.is_some() || !self.probe.done())
    }

    fn give_up(&mut self) {
        if self.load.has_pending() {
            self.load.histogram.mark_dnf();
        }
        self.failed = true;
    }
}

/// Runs one open-loop experiment and summarizes it as a row.
pub fn run(config: &RunConfig) -> Result<RunResult, RuntimeError> {
    assert!(config.workers > 0);
    // Independent pipelines share no progress information, so each worker
    // is its own single-worker cluster.
    let groups = if config.arm == Arm::WatermarksP { vec![1; config.workers] } else { vec![config.workers] };
    let start = Instant::now();
    let (lanes, counters) =
        if config.deterministic { run_round_robin(config, &groups, start)? } else { run_threaded(config, &groups, start)? };
    let mut histogram = LatencyHistogram::new();
    let mut injected = 0;
    for load in lanes.iter() {
        histogram.merge(&load.histogram);
        injected += load.sent();
    }
    let (sequence_length, experiment) = match config.experiment {
        Experiment::Wordcount => (None, "wordcount-quantum"),
        Experiment::Opsequence(length) => (Some(length), "opsequence"),
    };
    let row = ExperimentRow {
        experiment: experiment.to_string(),
        arm: config.arm,
        workers: config.workers,
        rate_per_worker: config.rate_per_worker,
        total_rate: config.rate_per_worker * config.workers as u64,
        quantum: config.quantum.quantum(),
        sequence_length,
        latencies: ExperimentRow::latencies_from(&histogram),
    };
    Ok(RunResult { row, histogram, counters, injected })
}

fn deadline(config: &RunConfig) -> u64 {
    (config.duration + DRAIN_GRACE).as_nanos() as u64
}

fn run_round_robin(
    config: &RunConfig,
    groups: &[usize],
    start: Instant,
) -> Result<(Vec<LoadGen>, RunCounters), RuntimeError> {
    let mut clusters = Vec::new();
    let mut lanes: Vec<Vec<Lane>> = Vec::new();
    let mut seed = 0;
    for &size in groups {
        let mut cluster = Cluster::<u64>::new(Config::new(size));
        let built = cluster.dataflow(|scope| build(scope, config.experiment, config.arm))?;
        lanes.push(
            built
                .into_iter()
                .map(|(input, probe)| {
                    seed += 1;
                    Lane { input: Some(input), probe, load: LoadGen::new(config, seed), failed: false }
                })
                .collect(),
        );
        clusters.push(cluster);
    }
    let end = deadline(config);
    loop {
        let mut live = false;
        for (cluster, lanes) in clusters.iter_mut().zip(lanes.iter_mut()) {
            for (index, lane) in lanes.iter_mut().enumerate() {
                if lane.failed {
                    continue;
                }
                lane.tick(nanos_since(start));
                cluster.step_worker(index)?;
                live |= lane.tick(nanos_since(start));
            }
        }
        let any_failed = lanes.iter().flatten().any(|l| l.failed);
        if !live || any_failed || nanos_since(start) > end {
            for lane in lanes.iter_mut().flatten() {
                if lane.input.is_some() || !lane.probe.done() {
                    lane.give_up();
                }
            }
            break;
        }
    }
    let mut counters = RunCounters::default();
    for cluster in clusters.iter() {
        for worker in cluster.workers() {
            counters.add(&worker.stats());
        }
    }
    Ok((lanes.into_iter().flatten().map(|l| l.load).collect(), counters))
}

fn run_threaded(
    config: &RunConfig,
    groups: &[usize],
    start: Instant,
) -> Result<(Vec<LoadGen>, RunCounters), RuntimeError> {
    let abort = AtomicBool::new(false);
    let end = deadline(config);
    let drive = |worker: &mut Worker<u64>, seed: u64| -> Result<(LoadGen, WorkerStats), RuntimeError> {
        let (input, probe) = worker.dataflow(|scope| build(scope, config.experiment, config.arm))?;
        let mut lane = Lane { input: Some(input), probe, load: LoadGen::new(config, seed), failed: false };
        loop {
            let live = lane.tick(nanos_since(start));
            if lane.failed {
                abort.store(true, Ordering::Relaxed);
            }
            if !live || abort.load(Ordering::Relaxed) || nanos_since(start) > end {
                if lane.input.is_some() || !lane.probe.done() {
                    lane.give_up();
                }
                break;
            }
            worker.step()?;
        }
        Ok((lane.load, worker.stats()))
    };
    let results: Vec<Result<Vec<(LoadGen, WorkerStats)>, RuntimeError>> = std::thread::scope(|s| {
        let handles: Vec<_> = groups
            .iter()
            .enumerate()
            .map(|(group, &size)| {
                let drive = &drive;
                s.spawn(move || {
                    let base = (group * 1000) as u64;
                    execute(Config::new(size), |worker| drive(worker, base + worker.index() as u64 + 1))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or(Err(RuntimeError::WorkerPanicked(0)))).collect()
    });
    let mut loads = Vec::new();
    let mut counters = RunCounters::default();
    for result in results {
        for (load, stats) in result? {
            counters.add(&stats);
            loads.push(load);
        }
    }
    Ok((loads, counters))
}

/// The highest per-worker rate, within `[low, high]` and to a factor of
/// `precision`, at which `probe_run` reports success, or `None` if even
/// `low` fails.
pub fn calibrate(low: u64, high: u64, precision: f64, mut probe_run: impl FnMut(u64) -> bool) -> Option<u64> {
    assert!(low > 0 && low <= high && precision > 1.0);
    if !probe_run(low) {
        return None;
    }
    if probe_run(high) {
        return Some(high);
    }
    let (mut good, mut bad) = (low, high);
    while (bad as f64) / (good as f64) > precision {
        let mid = ((good as f64) * (bad as f64)).sqrt() as u64;
        if probe_run(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Some(good)
}

/// Tail latency a calibration run must stay under to count as sustained.
pub const SUSTAIN_P999_NS: u64 = 100_000_000;

/// The highest per-worker rate at which the tokens arm of `experiment`
/// completes with its p999 under [`SUSTAIN_P999_NS`], from one-second runs.
pub fn calibrate_rate(
    experiment: Experiment,
    workers: usize,
    quantum: QuantumConfig,
    deterministic: bool,
) -> Result<Option<u64>, RuntimeError> {
    let mut error = None;
    let found = calibrate(1_000, 50_000_000, 1.25, |rate| {
        let config = RunConfig {
            experiment,
            arm: Arm::Tokens,
            workers,
            rate_per_worker: rate,
            quantum,
            duration: Duration::from_secs(1),
            warmup: Duration::from_millis(250),
            deterministic,
        };
        match run(&config) {
            Ok(result) => result.row.latencies.is_some_and(|l| l.p999 <= SUSTAIN_P999_NS),
            Err(e) => {
                error.get_or_insert(e);
                false
            }
        }
    });
    match error {
        Some(e) => Err(e),
        None => Ok(found),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibrate_finds_threshold() {
        let mut calls = 0;
        let got = calibrate(1_000, 10_000_000, 1.1, |r| {
            calls += 1;
            r <= 123_456
        })
        .unwrap();
        assert!(got <= 123_456 && got as f64 * 1.1 >= 123_456.0, "{got}");
        assert!(calls < 40);
        assert_eq!(calibrate(10, 100, 1.5, |_| false), None);
        assert_eq!(calibrate(10, 100, 1.5, |_| true), Some(100));
    }

    #[test]
    fn short_run_completes() {
        for deterministic in [true, false] {
            let config = RunConfig {
                experiment: Experiment::Wordcount,
                arm: Arm::Tokens,
                workers: 2,
                rate_per_worker: 20_000,
                quantum: QuantumConfig::new(16).unwrap(),
                duration: Duration::from_millis(200),
                warmup: Duration::from_millis(50),
                deterministic,
            };
            let result = run(&config).unwrap();
            assert_eq!(result.injected, 2 * 4_000);
            assert!(result.row.latencies.is_some(), "{:?}", result.row);
            assert_eq!(result.counters.safety_violations, 0);
        }
    }
}
