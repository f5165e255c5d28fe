use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::rc::Rc;
use std::sync::mpsc::{Receiver, Sender};
use std::sync::Arc;
use std::time::Instant;

use super::fabric::Fabric;
use super::handles::{Counters, InputHandle, OutputHandle, OutputPort};
use super::scope::{Activations, Data, Scope, ScopeState};
use super::{Config, RuntimeError};
use crate::progress::{ChangeBatch, FrontierTracker, Location, Pointstamp, Timestamp, TopologyBuilder};
use crate::tokens::TokenBookkeeping;

const PROGRESS_CHANNEL: usize = usize::MAX;

type ProgressBatch<T> = Vec<(Pointstamp<T>, i64)>;

/// The worker's view of one operator instance.
pub(crate) trait OperatorCore<T: Timestamp> {
    /// Moves newly arrived messages into the input queues; true if any came.
    fn pull(&mut self) -> bool {
        false
    }
    fn has_pending(&self) -> bool {
        false
    }
    fn set_frontier(&mut self, _port: usize, _frontier: &[T]) {}
    /// Whether frontier changes alone should schedule the operator.
    fn interested(&self) -> bool;
    fn invoke(&mut self);
    /// One bookkeeping per output port.
    fn bookkeeping(&self) -> &[TokenBookkeeping<T>];
    /// Consumed (`-1`) and produced (`+1`) message counts since the last call.
    fn drain_messages(&mut self, batch: &mut ChangeBatch<Pointstamp<T>>);
    fn push_staged(&mut self);
}

pub(crate) struct GenericOperator<T: Timestamp, D1, D2, L> {
    pub inputs: Vec<InputHandle<T, D1>>,
    pub output: OutputHandle<T, D2>,
    pub port: Rc<RefCell<OutputPort<T, D2>>>,
    pub bookkeeping: Vec<TokenBookkeeping<T>>,
    pub interest: Rc<Cell<bool>>,
    pub logic: L,
}

impl<T, D1, D2, L> OperatorCore<T> for GenericOperator<T, D1, D2, L>
where
    T: Timestamp,
    D1: Data,
    D2: Data,
    L: FnMut(&mut [InputHandle<T, D1>], &mut OutputHandle<T, D2>),
{
    fn pull(&mut self) -> bool {
        let mut any = false;
        for input in self.inputs.iter_mut() {
            any |= input.pull();
        }
        any
    }

    fn has_pending(&self) -> bool {
        self.inputs.iter().any(|i| i.has_pending())
    }

    fn set_frontier(&mut self, port: usize, frontier: &[T]) {
        self.inputs[port].set_frontier(frontier);
    }

    fn interested(&self) -> bool {
        self.interest.get()
    }

    fn invoke(&mut self) {
        (self.logic)(&mut self.inputs, &mut self.output);
    }

    fn bookkeeping(&self) -> &[TokenBookkeeping<T>] {
        &self.bookkeeping
    }

    fn drain_messages(&mut self, batch: &mut ChangeBatch<Pointstamp<T>>) {
        for input in self.inputs.iter_mut() {
            input.drain_consumed(batch);
        }
        self.port.borrow_mut().drain_produced(batch);
    }

    fn push_staged(&mut self) {
        self.port.borrow_mut().push_staged();
    }
}

pub(crate) struct ProbeOperator<T: Timestamp, D> {
    pub input: InputHandle<T, D>,
    pub frontier: Rc<RefCell<Vec<T>>>,
}

impl<T: Timestamp, D: Data> OperatorCore<T> for ProbeOperator<T, D> {
    fn pull(&mut self) -> bool {
        self.input.pull()
    }

    fn has_pending(&self) -> bool {
        self.input.has_pending()
    }

    fn set_frontier(&mut self, _port: usize, frontier: &[T]) {
        self.input.set_frontier(frontier);
        let mut shared = self.frontier.borrow_mut();
        shared.clear();
        shared.extend_from_slice(frontier);
    }

    fn interested(&self) -> bool {
        false
    }

    fn invoke(&mut self) {
        while self.input.next().is_some() {}
    }

    fn bookkeeping(&self) -> &[TokenBookkeeping<T>] {
        &[]
    }

    fn drain_messages(&mut self, batch: &mut ChangeBatch<Pointstamp<T>>) {
        self.input.drain_consumed(batch);
    }

    fn push_staged(&mut self) {}
}

/// Coordination counters for one worker.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub steps: u64,
    /// Operator invocations, including the flushes of external inputs.
    pub invocations: u64,
    /// Invocations per dataflow node.
    pub node_invocations: Vec<u64>,
    /// Progress batches sent to other workers (one per peer).
    pub progress_batches_sent: u64,
    pub progress_batches_received: u64,
    pub messages_sent: u64,
    pub deliveries: u64,
    /// Deliveries at a time the receiving input's frontier did not allow.
    pub safety_violations: u64,
}

/// A pointstamp still live when the dataflow stopped making progress.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeakedPointstamp {
    pub time: String,
    pub location: Location,
    pub description: String,
    pub count: i64,
}

/// What a stalled worker can say about the work it is waiting for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeakReport {
    pub worker: usize,
    pub pointstamps: Vec<LeakedPointstamp>,
}

impl fmt::Display for LeakReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "worker {} stalled with {} live pointstamp(s):", self.worker, self.pointstamps.len())?;
        for p in self.pointstamps.iter() {
            write!(f, " [time {} at {} x{}]", p.time, p.description, p.count)?;
        }
        Ok(())
    }
}

struct Dataflow<T: Timestamp> {
    tracker: FrontierTracker<T>,
    operators: Vec<Box<dyn OperatorCore<T>>>,
    activations: Rc<RefCell<Activations>>,
    counters: Rc<Counters>,
    schedule: VecDeque<usize>,
    scheduled: Vec<bool>,
    frontier_changes: ChangeBatch<(Location, T)>,
}

/// One thread of control: a dataflow instance, its tracker and scheduler.
pub struct Worker<T: Timestamp> {
    index: usize,
    peers: usize,
    config: Config,
    fabric: Arc<Fabric>,
    progress_out: Vec<Sender<ProgressBatch<T>>>,
    progress_in: Receiver<ProgressBatch<T>>,
    dataflow: Option<Dataflow<T>>,
    stats: WorkerStats,
}

impl<T: Timestamp> Worker<T> {
    pub fn new(index: usize, fabric: Arc<Fabric>, config: Config) -> Self {
        let (progress_out, progress_in) = fabric.channel(PROGRESS_CHANNEL, index);
        Worker {
            index,
            peers: fabric.peers(),
            config,
            fabric,
            progress_out,
            progress_in,
            dataflow: None,
            stats: WorkerStats::default(),
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn peers(&self) -> usize {
        self.peers
    }

    pub fn stats(&self) -> WorkerStats {
        let mut stats = self.stats.clone();
        if let Some(dataflow) = &self.dataflow {
            stats.deliveries = dataflow.counters.deliveries.get();
            stats.safety_violations = dataflow.counters.safety_violations.get();
            stats.messages_sent = dataflow.counters.messages_sent.get();
        }
        stats
    }

    /// The worker's tracker, once a dataflow is built.
    pub fn tracker(&self) -> Option<&FrontierTracker<T>> {
        self.dataflow.as_ref().map(|d| &d.tracker)
    }

    /// Builds this worker's instance of the dataflow. Every worker must
    /// build the same graph. A worker hosts one dataflow.
    pub fn dataflow<R>(&mut self, build: impl FnOnce(&mut Scope<T>) -> R) -> Result<R, RuntimeError> {
        if self.dataflow.is_some() {
            return Err(RuntimeError::Build("this worker already hosts a dataflow".into()));
        }
        let activations = Rc::new(RefCell::new(Activations::default()));
        let counters = Rc::new(Counters::default());
        let mut scope = Scope::new(ScopeState {
            index: self.index,
            peers: self.peers,
            max_batch: self.config.max_batch,
            fabric: self.fabric.clone(),
            topology: TopologyBuilder::new(),
            operators: Vec::new(),
            activations: activations.clone(),
            counters: counters.clone(),
            open_loops: BTreeMap::new(),
        });
        let result = build(&mut scope);

        let (topology, operators, open_loops) = {
            let mut state = scope.state.borrow_mut();
            (
                std::mem::take(&mut state.topology),
                std::mem::take(&mut state.operators),
                std::mem::take(&mut state.open_loops),
            )
        };
        if let Some((node, name)) = open_loops.into_iter().next() {
            return Err(RuntimeError::Build(format!("{name} (node {node}) was never connected")));
        }
        let topology = topology.build()?;
        let operators: Vec<_> = operators.into_iter().map(|o| o.expect("operator not installed")).collect();

        // Every worker's instance of every operator starts with one token per
        // output, so each edge starts at `peers` counts of the minimum.
        let mut initial = ChangeBatch::new();
        for (node, shape) in topology.nodes().iter().enumerate() {
            for port in 0..shape.outputs {
                for &edge in topology.edges_from(node, port) {
                    initial.update(Pointstamp::new(T::minimum(), Location::Edge(edge)), self.peers as i64);
                }
            }
        }
        let mut tracker = FrontierTracker::new(topology);
        tracker.apply(&mut initial)?;

        let count = operators.len();
        let mut dataflow = Dataflow {
            tracker,
            operators,
            activations,
            counters,
            schedule: VecDeque::new(),
            scheduled: vec![false; count],
            frontier_changes: ChangeBatch::new(),
        };
        let locations: Vec<Location> = dataflow.tracker.topology().locations().collect();
        for location in locations {
            if let Location::Node { node, port } = location {
                let frontier = dataflow.tracker.frontier(location).to_vec();
                dataflow.operators[node].set_frontier(port, &frontier);
            }
        }
        self.stats.node_invocations = vec![0; count];
        self.dataflow = Some(dataflow);
        // Constructors may already have discarded or downgraded tokens.
        for node in 0..count {
            self.settle(node)?;
        }
        self.react();
        Ok(result)
    }

    /// Runs one round of the scheduler. Returns whether anything happened.
    pub fn step(&mut self) -> Result<bool, RuntimeError> {
        let Some(dataflow) = self.dataflow.as_mut() else {
            return Ok(false);
        };
        self.stats.steps += 1;
        let mut active = false;

        // Data first: the progress updates announcing these messages were
        // queued before them, so draining progress second never sees a
        // consumption without its production.
        for node in 0..dataflow.operators.len() {
            if dataflow.operators[node].pull() {
                dataflow.schedule(node);
                active = true;
            }
        }
        while let Ok(updates) = self.progress_in.try_recv() {
            let mut batch: ChangeBatch<Pointstamp<T>> = updates.into_iter().collect();
            dataflow.tracker.apply_into(&mut batch, &mut dataflow.frontier_changes)?;
            self.stats.progress_batches_received += 1;
            active = true;
        }
        self.react();

        let dataflow = self.dataflow.as_mut().unwrap();
        let activated = dataflow.activations.borrow_mut().drain();
        for node in activated {
            dataflow.schedule(node);
        }
        let ready = dataflow.schedule.len();
        for _ in 0..ready {
            let dataflow = self.dataflow.as_mut().unwrap();
            let node = dataflow.schedule.pop_front().unwrap();
            dataflow.scheduled[node] = false;
            dataflow.operators[node].invoke();
            self.stats.invocations += 1;
            self.stats.node_invocations[node] += 1;
            self.settle(node)?;
            self.react();
            let dataflow = self.dataflow.as_mut().unwrap();
            if dataflow.operators[node].has_pending() {
                dataflow.schedule(node);
            }
        }
        Ok(active || ready > 0)
    }

    /// Drains everything `node` recorded, applies it locally, announces it to
    /// the other workers, and only then releases the node's messages.
    fn settle(&mut self, node: usize) -> Result<(), RuntimeError> {
        let dataflow = self.dataflow.as_mut().unwrap();
        let mut batch = ChangeBatch::new();
        let operator = &mut dataflow.operators[node];
        for (port, bookkeeping) in operator.bookkeeping().iter().enumerate() {
            if !bookkeeping.is_dirty() {
                continue;
            }
            let edges = dataflow.tracker.topology().edges_from(node, port);
            for (time, delta) in bookkeeping.drain().into_inner() {
                for &edge in edges {
                    batch.update(Pointstamp::new(time.clone(), Location::Edge(edge)), delta);
                }
            }
        }
        operator.drain_messages(&mut batch);
        if !batch.is_empty() {
            let updates = batch.into_inner();
            for (peer, sender) in self.progress_out.iter().enumerate() {
                if peer != self.index {
                    let _ = sender.send(updates.clone());
                    self.stats.progress_batches_sent += 1;
                }
            }
            let mut local: ChangeBatch<Pointstamp<T>> = updates.into_iter().collect();
            dataflow.tracker.apply_into(&mut local, &mut dataflow.frontier_changes)?;
        }
        dataflow.operators[node].push_staged();
        Ok(())
    }

    /// Refreshes operator frontier views after tracker changes and schedules
    /// the operators that care.
    fn react(&mut self) {
        let dataflow = self.dataflow.as_mut().unwrap();
        let mut last = None;
        let changes = std::mem::take(&mut dataflow.frontier_changes).into_inner();
        for ((location, _), _) in changes {
            if let Location::Node { node, port } = location {
                if last == Some((node, port)) {
                    continue;
                }
                last = Some((node, port));
                let frontier = dataflow.tracker.frontier(location).to_vec();
                dataflow.operators[node].set_frontier(port, &frontier);
                if dataflow.operators[node].interested() {
                    dataflow.schedule(node);
                }
            }
        }
    }

    /// True once no pointstamp is live and nothing is scheduled.
    pub fn is_quiescent(&self) -> bool {
        match &self.dataflow {
            None => true,
            Some(d) => d.tracker.is_empty() && d.schedule.is_empty() && d.activations.borrow().is_empty(),
        }
    }

    /// The live pointstamps, described by where they sit.
    pub fn leak_report(&self) -> LeakReport {
        let mut pointstamps = Vec::new();
        if let Some(dataflow) = &self.dataflow {
            let topology = dataflow.tracker.topology();
            for (pointstamp, count) in dataflow.tracker.live_pointstamps() {
                let description = match pointstamp.location {
                    Location::Edge(edge) => {
                        let source = topology.edges()[edge].source;
                        format!("{} (output of {})", topology.describe(pointstamp.location), topology.nodes()[source.node].name)
                    }
                    other => topology.describe(other),
                };
                pointstamps.push(LeakedPointstamp {
                    time: format!("{:?}", pointstamp.time),
                    location: pointstamp.location,
                    description,
                    count,
                });
            }
        }
        LeakReport { worker: self.index, pointstamps }
    }

    /// Steps until quiescent. Fails with a leak report if no progress is
    /// made for the configured stall timeout while work remains.
    pub fn run_until_quiescent(&mut self) -> Result<(), RuntimeError> {
        let mut idle_since: Option<Instant> = None;
        loop {
            let active = self.step()?;
            if self.is_quiescent() {
                return Ok(());
            }
            if active {
                idle_since = None;
            } else {
                let since = *idle_since.get_or_insert_with(Instant::now);
                if since.elapsed() > self.config.stall_timeout {
                    return Err(RuntimeError::Stalled(self.leak_report()));
                }
                std::thread::yield_now();
            }
        }
    }
}

impl<T: Timestamp> Dataflow<T> {
    fn schedule(&mut self, node: usize) {
        if !self.scheduled[node] {
            self.scheduled[node] = true;
            self.schedule.push_back(node);
        }
    }
}
