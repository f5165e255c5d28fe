//! Scheduler-driven measurements that do not depend on wall-clock time:
//! every quantity here is a count of operator invocations on a cluster
//! stepped round-robin on one thread.

use tokenflow::runtime::{Cluster, Config, ExternalInput, RuntimeError, Worker};

use crate::dataflows::{build, Experiment, COUNT_NAME, STAGE_PREFIX};
use crate::quantum::QuantumConfig;
use crate::row::Arm;

/// Invocations so far of the nodes whose names satisfy `select`.
pub fn named_invocations(worker: &Worker<u64>, select: impl Fn(&str) -> bool) -> u64 {
    let Some(tracker) = worker.tracker() else { return 0 };
    let stats = worker.stats();
    tracker
        .topology()
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, node)| select(&node.name))
        .map(|(index, _)| stats.node_invocations[index])
        .sum()
}

fn clusters_for(arm: Arm, workers: usize) -> Vec<Cluster<u64>> {
    let groups = if arm == Arm::WatermarksP { vec![1; workers] } else { vec![workers] };
    groups.into_iter().map(|size| Cluster::new(Config::new(size))).collect()
}

fn settle(clusters: &mut [Cluster<u64>]) -> Result<(), RuntimeError> {
    loop {
        let mut active = false;
        for cluster in clusters.iter_mut() {
            active |= cluster.step()?;
        }
        if !active {
            return Ok(());
        }
    }
}

fn total(clusters: &[Cluster<u64>], select: impl Fn(&str) -> bool + Copy) -> u64 {
    clusters.iter().flat_map(|c| c.workers()).map(|w| named_invocations(w, select)).sum()
}

/// Average invocations per input tick of an idle chain of `length` stages,
/// summed over all workers. Each tick advances every input by one time unit
/// and sends no data.
pub fn idle_tick_invocations(arm: Arm, workers: usize, length: usize, ticks: u64) -> Result<f64, RuntimeError> {
    let mut clusters = clusters_for(arm, workers);
    let mut inputs: Vec<ExternalInput<u64, u64>> = Vec::new();
    for cluster in clusters.iter_mut() {
        for (input, _probe) in cluster.dataflow(|scope| build(scope, Experiment::Opsequence(length), arm))? {
            inputs.push(input);
        }
    }
    settle(&mut clusters)?;
    let is_stage = |name: &str| name.starts_with(STAGE_PREFIX);
    let before = total(&clusters, is_stage);
    for tick in 1..=ticks {
        for input in inputs.iter_mut() {
            input.advance_to(tick).expect("ticks increase");
        }
        settle(&mut clusters)?;
    }
    let after = total(&clusters, is_stage);
    drop(inputs);
    for cluster in clusters.iter_mut() {
        cluster.run_until_quiescent()?;
    }
    Ok((after - before) as f64 / ticks as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interactions {
    pub records: u64,
    pub distinct_timestamps: u64,
    /// Scheduler rounds the run took.
    pub rounds: u64,
    /// Invocations of the counting operator.
    pub count_invocations: u64,
}

/// Drives word count on one worker with simulated event times: record `i`
/// happens at `i * spacing_ns` and `per_round` records are injected before
/// each scheduler round.
pub fn wordcount_interactions(
    arm: Arm,
    quantum: QuantumConfig,
    records: u64,
    spacing_ns: u64,
    per_round: u64,
) -> Result<Interactions, RuntimeError> {
    assert!(per_round > 0);
    let mut cluster = Cluster::<u64>::new(Config::new(1));
    let (mut input, _probe) = cluster.dataflow(|scope| build(scope, Experiment::Wordcount, arm))?.pop().unwrap();
    let mut distinct = 0;
    let mut last = None;
    let mut rounds = 0;
    let mut sent = 0;
    while sent < records {
        for _ in 0..per_round.min(records - sent) {
            let time = quantum.quantize(sent * spacing_ns);
            if last != Some(time) {
                distinct += 1;
                last = Some(time);
                input.advance_to(time).expect("event times increase");
            }
            input.send(sent % 1024);
            sent += 1;
        }
        input.flush();
        cluster.step()?;
        rounds += 1;
    }
    drop(input);
    while cluster.step()? {
        rounds += 1;
    }
    cluster.run_until_quiescent()?;
    Ok(Interactions {
        records,
        distinct_timestamps: distinct,
        rounds,
        count_invocations: named_invocations(cluster.worker(0), |n| n == COUNT_NAME),
    })
}

/// Least-squares slope and coefficient of determination of `y` against `x`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_of_a_line() {
        let (slope, r2) = linear_fit(&[(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)]);
        assert!((slope - 2.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn idle_token_chain_is_never_invoked() {
        assert_eq!(idle_tick_invocations(Arm::Tokens, 2, 8, 5).unwrap(), 0.0);
    }

    #[test]
    fn idle_watermark_chain_runs_every_stage() {
        let x = idle_tick_invocations(Arm::WatermarksX, 2, 8, 5).unwrap();
        assert!(x >= 16.0, "{x}");
        let p = idle_tick_invocations(Arm::WatermarksP, 2, 8, 5).unwrap();
        assert_eq!(p, 16.0);
    }

    #[test]
    fn notifications_pay_per_timestamp() {
        let fine = QuantumConfig::new(8).unwrap();
        let n = wordcount_interactions(Arm::Notifications, fine, 2000, 300, 50).unwrap();
        assert_eq!(n.distinct_timestamps, 2000);
        assert!(n.count_invocations >= n.distinct_timestamps);
        let t = wordcount_interactions(Arm::Tokens, fine, 2000, 300, 50).unwrap();
        assert!(t.count_invocations <= t.rounds);
    }
}
