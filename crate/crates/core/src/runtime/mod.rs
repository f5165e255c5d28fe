//! Workers, channels, operator construction and the scheduler loop.
//!
//! Every worker builds the same dataflow and runs its own instance of each
//! operator. Workers share nothing but queues: one per edge and worker for
//! data, and one per worker for progress batches. After each operator
//! invocation the worker drains the operator's token bookkeeping together
//! with the `+1`/`-1` counts of messages it produced and consumed, applies
//! the batch to its own tracker, sends it to every other worker, and only
//! then lets the operator's messages go.
//!
//! Workers can run on their own threads ([`execute`]) or be stepped
//! round-robin on the calling thread ([`Cluster`]), which is deterministic.

mod fabric;
mod handles;
mod input;
mod scope;
mod worker;

use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

pub use fabric::{Fabric, Message};
pub use handles::{InputHandle, OutputHandle, Pact, SendToken, Session};
pub use input::ExternalInput;
pub use scope::{Activator, Data, FrontierInterest, LoopHandle, OperatorInfo, ProbeHandle, Scope, Stream};
pub use worker::{LeakReport, LeakedPointstamp, Worker, WorkerStats};

use crate::progress::{ProgressError, Timestamp, TopologyError};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Progress(#[from] ProgressError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("dataflow construction failed: {0}")]
    Build(String),
    #[error("{0}")]
    Stalled(LeakReport),
    #[error("worker {0} panicked")]
    WorkerPanicked(usize),
}

#[derive(Clone, Debug)]
pub struct Config {
    pub workers: usize,
    /// Records per message before a session cuts a new one.
    pub max_batch: usize,
    /// How long a threaded worker may go without progress, while work
    /// remains, before giving up with a leak report.
    pub stall_timeout: Duration,
}

impl Config {
    pub fn new(workers: usize) -> Self {
        Config { workers, max_batch: 256, stall_timeout: Duration::from_secs(1) }
    }

    pub fn max_batch(mut self, max_batch: usize) -> Self {
        assert!(max_batch > 0);
        self.max_batch = max_batch;
        self
    }

    pub fn stall_timeout(mut self, timeout: Duration) -> Self {
        self.stall_timeout = timeout;
        self
    }
}

/// All workers of a cluster, stepped in turn on the calling thread.
pub struct Cluster<T: Timestamp> {
    workers: Vec<Worker<T>>,
}

impl<T: Timestamp> Cluster<T> {
    pub fn new(config: Config) -> Self {
        let fabric = Fabric::new(config.workers);
        let workers = (0..config.workers).map(|i| Worker::new(i, fabric.clone(), config.clone())).collect();
        Cluster { workers }
    }

    /// Builds the dataflow on every worker, in index order.
    pub fn dataflow<R>(&mut self, mut build: impl FnMut(&mut Scope<T>) -> R) -> Result<Vec<R>, RuntimeError> {
        self.workers.iter_mut().map(|w| w.dataflow(&mut build)).collect()
    }

    /// Steps every worker once. Returns whether any of them did anything.
    pub fn step(&mut self) -> Result<bool, RuntimeError> {
        let mut active = false;
        for worker in self.workers.iter_mut() {
            active |= worker.step()?;
        }
        Ok(active)
    }

    /// Steps only worker `index`, for tests that script interleavings.
    pub fn step_worker(&mut self, index: usize) -> Result<bool, RuntimeError> {
        self.workers[index].step()
    }

    /// Steps until no worker has anything left to do. Fails with a leak
    /// report if that happens while pointstamps are still live.
    pub fn run_until_quiescent(&mut self) -> Result<(), RuntimeError> {
        while self.step()? {}
        match self.workers.iter().find(|w| !w.is_quiescent()) {
            Some(worker) => Err(RuntimeError::Stalled(worker.leak_report())),
            None => Ok(()),
        }
    }

    pub fn workers(&self) -> &[Worker<T>] {
        &self.workers
    }

    pub fn worker(&self, index: usize) -> &Worker<T> {
        &self.workers[index]
    }
}

/// Runs `logic` on `config.workers` threads, each with its own worker, and
/// collects the results in worker order.
pub fn execute<T, R, F>(config: Config, logic: F) -> Result<Vec<R>, RuntimeError>
where
    T: Timestamp,
    R: Send,
    F: Fn(&mut Worker<T>) -> Result<R, RuntimeError> + Sync,
{
    let fabric: Arc<Fabric> = Fabric::new(config.workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..config.workers)
            .map(|index| {
                let fabric = fabric.clone();
                let config = config.clone();
                let logic = &logic;
                s.spawn(move || {
                    let mut worker = Worker::new(index, fabric, config);
                    logic(&mut worker)
                })
            })
            .collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(index, handle)| handle.join().map_err(|_| RuntimeError::WorkerPanicked(index))?)
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::progress::{Location, Pointstamp};

    #[test]
    fn empty_dataflow_is_immediately_quiescent() {
        let mut cluster = Cluster::<u64>::new(Config::new(2));
        cluster.dataflow(|_scope| ()).unwrap();
        cluster.run_until_quiescent().unwrap();
    }

    #[test]
    fn map_pipeline_delivers_and_quiesces() {
        let mut cluster = Cluster::<u64>::new(Config::new(1));
        let mut built = cluster
            .dataflow(|scope| {
                let (input, stream) = scope.new_input::<u64>();
                let doubled = stream.unary(Pact::Pipeline, "Double", |token, _info| {
                    drop(token);
                    |input: &mut InputHandle<u64, u64>, output: &mut OutputHandle<u64, u64>| {
                        input.for_each(|tok, data| {
                            output.session(&tok).give_iterator(data.drain(..).map(|x| 2 * x));
                        })
                    }
                });
                (input, doubled.capture())
            })
            .unwrap();
        let (mut input, captured) = built.pop().unwrap();
        input.send(3);
        input.advance_to(5).unwrap();
        input.send(4);
        drop(input);
        cluster.run_until_quiescent().unwrap();
        assert_eq!(*captured.borrow(), vec![(0, 6), (5, 8)]);
        let stats = cluster.worker(0).stats();
        assert_eq!(stats.safety_violations, 0);
        assert_eq!(stats.deliveries, 4);
    }

    #[test]
    fn large_session_is_cut_into_messages() {
        let mut cluster = Cluster::<u64>::new(Config::new(1));
        let mut built = cluster
            .dataflow(|scope| {
                let (input, stream) = scope.new_input::<u64>();
                (input, stream.capture())
            })
            .unwrap();
        let (mut input, captured) = built.pop().unwrap();
        input.send_batch(0..1000);
        input.flush();
        cluster.step().unwrap();
        let worker = cluster.worker(0);
        let tracker = worker.tracker().unwrap();
        // ceil(1000 / 256) messages in flight, plus the input's token
        assert_eq!(tracker.count(&Pointstamp::new(0, Location::Edge(0))), 4 + 1);
        assert_eq!(worker.stats().messages_sent, 4);
        drop(input);
        cluster.run_until_quiescent().unwrap();
        assert_eq!(captured.borrow().len(), 1000);
    }

    #[test]
    fn exchange_routes_by_key() {
        let mut cluster = Cluster::<u64>::new(Config::new(3));
        let built = cluster
            .dataflow(|scope| {
                let (input, stream) = scope.new_input::<u64>();
                let routed = stream.unary(Pact::exchange(|x: &u64| *x), "Route", |token, _info| {
                    drop(token);
                    |input: &mut InputHandle<u64, u64>, output: &mut OutputHandle<u64, u64>| {
                        input.for_each(|tok, data| output.session(&tok).give_vec(data));
                    }
                });
                (input, routed.capture())
            })
            .unwrap();
        let mut captures = Vec::new();
        for (index, (mut input, captured)) in built.into_iter().enumerate() {
            if index == 0 {
                input.send_batch(0..30);
            }
            captures.push(captured);
        }
        cluster.run_until_quiescent().unwrap();
        for (worker, captured) in captures.iter().enumerate() {
            let got = captured.borrow();
            assert_eq!(got.len(), 10);
            assert!(got.iter().all(|(_, x)| *x as usize % 3 == worker));
        }
    }

    #[test]
    fn in_flight_message_holds_remote_frontier() {
        let mut cluster = Cluster::<u64>::new(Config::new(2));
        let built = cluster
            .dataflow(|scope| {
                let (input, stream) = scope.new_input::<u64>();
                let routed = stream.unary(Pact::exchange(|_: &u64| 1), "ToOne", |token, _info| {
                    drop(token);
                    |input: &mut InputHandle<u64, u64>, output: &mut OutputHandle<u64, u64>| {
                        input.for_each(|tok, data| output.session(&tok).give_vec(data));
                    }
                });
                (input, routed.probe())
            })
            .unwrap();
        let mut inputs = Vec::new();
        let mut probes = Vec::new();
        for (input, probe) in built {
            inputs.push(input);
            probes.push(probe);
        }
        inputs[0].advance_to(7).unwrap();
        inputs[0].send(7);
        inputs[0].advance_to(10).unwrap();
        inputs[1].advance_to(10).unwrap();
        let probe_input = Location::Node { node: 2, port: 0 };
        for _ in 0..3 {
            cluster.step_worker(1).unwrap();
        }
        // Worker 0 flushes its input, then forwards 7 towards worker 1.
        cluster.step_worker(0).unwrap();
        cluster.step_worker(0).unwrap();
        assert_eq!(cluster.worker(0).tracker().unwrap().frontier(probe_input), &[7]);
        // Worker 1 consumes it; worker 0 has not heard yet.
        cluster.step_worker(1).unwrap();
        cluster.step_worker(1).unwrap();
        assert_eq!(cluster.worker(1).tracker().unwrap().frontier(probe_input), &[10]);
        assert_eq!(cluster.worker(0).tracker().unwrap().frontier(probe_input), &[7]);
        cluster.step_worker(0).unwrap();
        assert_eq!(cluster.worker(0).tracker().unwrap().frontier(probe_input), &[10]);
        assert!(probes.iter().all(|p| !p.less_equal(&7) && p.less_equal(&10)));
        drop(inputs);
        cluster.run_until_quiescent().unwrap();
        assert!(probes.iter().all(|p| p.done()));
    }

    #[test]
    fn held_token_is_reported() {
        let mut cluster = Cluster::<u64>::new(Config::new(1));
        cluster
            .dataflow(|scope| {
                let (input, stream) = scope.new_input::<u64>();
                drop(input);
                let held = stream.unary(Pact::Pipeline, "Hoarder", |token, _info| {
                    let _kept = token;
                    move |input: &mut InputHandle<u64, u64>, _output: &mut OutputHandle<u64, u64>| {
                        let _ = &_kept;
                        input.for_each(|_, _| {});
                    }
                });
                held.probe();
            })
            .unwrap();
        let err = cluster.run_until_quiescent().unwrap_err();
        let RuntimeError::Stalled(report) = err else { panic!("expected a stall") };
        assert_eq!(report.pointstamps.len(), 1);
        assert!(report.pointstamps[0].description.contains("Hoarder"));
        assert_eq!(report.pointstamps[0].time, "0");
    }

    #[test]
    fn unconnected_loop_is_rejected() {
        let mut cluster = Cluster::<u64>::new(Config::new(1));
        let result = cluster.dataflow(|scope| {
            let (_handle, _stream) = scope.feedback::<u64>(1);
        });
        assert!(matches!(result, Err(RuntimeError::Build(_))));
    }

    #[test]
    fn loop_without_advance_is_rejected() {
        let mut cluster = Cluster::<u64>::new(Config::new(1));
        let result = cluster.dataflow(|scope| {
            let (handle, stream) = scope.feedback::<u64>(0);
            stream.connect_loop(handle);
        });
        assert!(matches!(result, Err(RuntimeError::Topology(_))));
    }

    #[test]
    fn threaded_execution_matches() {
        let results = execute(Config::new(3), |worker: &mut Worker<u64>| {
            let index = worker.index();
            let (mut input, captured) = worker.dataflow(|scope| {
                let (input, stream) = scope.new_input::<u64>();
                let routed = stream.unary(Pact::exchange(|x: &u64| *x), "Route", |token, _info| {
                    drop(token);
                    |input: &mut InputHandle<u64, u64>, output: &mut OutputHandle<u64, u64>| {
                        input.for_each(|tok, data| output.session(&tok).give_vec(data));
                    }
                });
                (input, routed.capture())
            })?;
            for round in 0..5u64 {
                input.send(round * 3 + index as u64);
                input.advance_to(round + 1).unwrap();
                worker.step()?;
            }
            drop(input);
            worker.run_until_quiescent()?;
            let mut got: Vec<u64> = captured.borrow().iter().map(|(_, x)| *x).collect();
            got.sort();
            Ok(got)
        })
        .unwrap();
        let mut all: Vec<u64> = results.concat();
        all.sort();
        assert_eq!(all, (0..15).collect::<Vec<_>>());
    }
}
