//! What operator logic sees: input handles, output handles and sessions.

use std::cell::{Cell, RefCell, RefMut};
use std::collections::VecDeque;
use std::rc::Rc;
use std::sync::mpsc::{Receiver, Sender};

use super::fabric::Message;
use crate::progress::{ChangeBatch, Location, PathSummary, Pointstamp, Timestamp};
use crate::tokens::{OutputLink, TimestampToken, TimestampTokenRef, TokenBookkeeping, TokenError};

/// How records on an edge are distributed among workers.
pub enum Pact<D> {
    /// Records stay on the sending worker.
    Pipeline,
    /// Records go to worker `key(record) % workers`.
    Exchange(Rc<dyn Fn(&D) -> u64>),
}

impl<D> Pact<D> {
    pub fn exchange(key: impl Fn(&D) -> u64 + 'static) -> Self {
        Pact::Exchange(Rc::new(key))
    }
}

impl<D> Clone for Pact<D> {
    fn clone(&self) -> Self {
        match self {
            Pact::Pipeline => Pact::Pipeline,
            Pact::Exchange(key) => Pact::Exchange(key.clone()),
        }
    }
}

/// Per-worker counters updated from inside handles.
#[derive(Default, Debug)]
pub(crate) struct Counters {
    pub deliveries: Cell<u64>,
    pub safety_violations: Cell<u64>,
    pub messages_sent: Cell<u64>,
}

fn bump(cell: &Cell<u64>) {
    cell.set(cell.get() + 1);
}

/// The sending end of one edge on one worker.
pub(crate) struct EdgePusher<T, D> {
    edge: usize,
    worker: usize,
    pact: Pact<D>,
    senders: Vec<Sender<Message<T, D>>>,
    buffers: Vec<Vec<D>>,
    // Held back until the progress updates announcing them are out.
    staged: Vec<(usize, Message<T, D>)>,
    max_batch: usize,
}

impl<T: Timestamp, D> EdgePusher<T, D> {
    pub fn new(edge: usize, worker: usize, pact: Pact<D>, senders: Vec<Sender<Message<T, D>>>, max_batch: usize) -> Self {
        let buffers = (0..senders.len()).map(|_| Vec::new()).collect();
        EdgePusher { edge, worker, pact, senders, buffers, staged: Vec::new(), max_batch }
    }

    fn give(&mut self, time: &T, datum: D, produced: &mut ChangeBatch<Pointstamp<T>>, counters: &Counters) {
        let target = match &self.pact {
            Pact::Pipeline => self.worker,
            Pact::Exchange(key) => (key(&datum) % self.senders.len() as u64) as usize,
        };
        self.buffers[target].push(datum);
        if self.buffers[target].len() >= self.max_batch {
            self.cut(target, time, produced, counters);
        }
    }

    fn cut(&mut self, target: usize, time: &T, produced: &mut ChangeBatch<Pointstamp<T>>, counters: &Counters) {
        let data = std::mem::take(&mut self.buffers[target]);
        produced.update(Pointstamp::new(time.clone(), Location::Edge(self.edge)), 1);
        bump(&counters.messages_sent);
        self.staged.push((target, Message { time: time.clone(), data }));
    }

    fn flush(&mut self, time: &T, produced: &mut ChangeBatch<Pointstamp<T>>, counters: &Counters) {
        for target in 0..self.buffers.len() {
            if !self.buffers[target].is_empty() {
                self.cut(target, time, produced, counters);
            }
        }
    }

    fn push_staged(&mut self) {
        for (target, message) in self.staged.drain(..) {
            // A closed receiver means that worker has shut down; nothing to do.
            let _ = self.senders[target].send(message);
        }
    }
}

/// The sending side of one operator output: one pusher per outgoing edge,
/// plus the `+1`s for messages created since the last drain.
pub(crate) struct OutputPort<T, D> {
    pushers: Vec<EdgePusher<T, D>>,
    produced: ChangeBatch<Pointstamp<T>>,
    counters: Rc<Counters>,
}

impl<T: Timestamp, D: Clone> OutputPort<T, D> {
    pub fn new(counters: Rc<Counters>) -> Self {
        OutputPort { pushers: Vec::new(), produced: ChangeBatch::new(), counters }
    }

    pub fn add_pusher(&mut self, pusher: EdgePusher<T, D>) {
        self.pushers.push(pusher);
    }

    pub fn give(&mut self, time: &T, datum: D) {
        let OutputPort { pushers, produced, counters } = self;
        if let Some((last, rest)) = pushers.split_last_mut() {
            for pusher in rest {
                pusher.give(time, datum.clone(), produced, counters);
            }
            last.give(time, datum, produced, counters);
        }
    }

    pub fn flush(&mut self, time: &T) {
        let OutputPort { pushers, produced, counters } = self;
        for pusher in pushers.iter_mut() {
            pusher.flush(time, produced, counters);
        }
    }

    pub fn drain_produced(&mut self, batch: &mut ChangeBatch<Pointstamp<T>>) {
        self.produced.drain_into(batch);
    }

    pub fn push_staged(&mut self) {
        for pusher in self.pushers.iter_mut() {
            pusher.push_staged();
        }
    }
}

/// Something that entitles a session to send on an output.
pub trait SendToken<T: Timestamp> {
    /// The time this token allows on the output owning `bookkeeping`, which
    /// is output number `index` of the operator.
    ///
    /// # Panics
    ///
    /// If the token belongs to a different output.
    fn time_on(&self, bookkeeping: &TokenBookkeeping<T>, index: usize) -> T;
}

impl<T: Timestamp> SendToken<T> for TimestampToken<T> {
    fn time_on(&self, bookkeeping: &TokenBookkeeping<T>, _index: usize) -> T {
        assert!(self.bookkeeping().same_as(bookkeeping), "token belongs to a different output");
        self.time().clone()
    }
}

impl<T: Timestamp> SendToken<T> for TimestampTokenRef<'_, T> {
    fn time_on(&self, bookkeeping: &TokenBookkeeping<T>, index: usize) -> T {
        let link = self.links().get(index).expect("token reference from another operator");
        assert!(link.bookkeeping.same_as(bookkeeping), "token reference from another operator");
        self.time_for(index)
    }
}

/// An operator's output, through which sessions are opened.
pub struct OutputHandle<T: Timestamp, D> {
    port: Rc<RefCell<OutputPort<T, D>>>,
    bookkeeping: Option<TokenBookkeeping<T>>,
    index: usize,
}

impl<T: Timestamp, D: Clone> OutputHandle<T, D> {
    pub(crate) fn new(port: Rc<RefCell<OutputPort<T, D>>>, bookkeeping: Option<TokenBookkeeping<T>>, index: usize) -> Self {
        OutputHandle { port, bookkeeping, index }
    }

    /// A session sending at the token's time. While it is open the token
    /// cannot be downgraded or discarded:
    ///
    /// ```compile_fail
    /// # use tokenflow::runtime::{Cluster, Config, Pact};
    /// # let mut cluster = Cluster::<u64>::new(Config::new(1));
    /// # cluster.dataflow(|scope| {
    /// # let (_input, stream) = scope.new_input::<u64>();
    /// stream.unary(Pact::Pipeline, "Hold", |token, _info| {
    ///     let mut token = Some(token);
    ///     move |_input, output| {
    ///         let held = token.take().unwrap();
    ///         let mut session = output.session(&held);
    ///         drop(held);
    ///         session.give(1u64);
    ///     }
    /// });
    /// # }).unwrap();
    /// ```
    pub fn session<'a, K: SendToken<T>>(&'a mut self, token: &'a K) -> Session<'a, T, D> {
        let bookkeeping = self.bookkeeping.as_ref().expect("operator has no output");
        let time = token.time_on(bookkeeping, self.index);
        Session { time, port: self.port.borrow_mut() }
    }

    /// A session at `time`, which must be in advance of the token's time.
    pub fn session_at<'a, K: SendToken<T>>(&'a mut self, token: &'a K, time: T) -> Result<Session<'a, T, D>, TokenError> {
        let bookkeeping = self.bookkeeping.as_ref().expect("operator has no output");
        let allowed = token.time_on(bookkeeping, self.index);
        if !allowed.less_equal(&time) {
            return Err(TokenError::NotInAdvance { current: format!("{allowed:?}"), requested: format!("{time:?}") });
        }
        Ok(Session { time, port: self.port.borrow_mut() })
    }
}

/// Sends records at one pinned time. Buffered records are cut into messages
/// of at most the configured batch size, and the rest are flushed on drop.
pub struct Session<'a, T: Timestamp, D: Clone> {
    time: T,
    port: RefMut<'a, OutputPort<T, D>>,
}

impl<T: Timestamp, D: Clone> Session<'_, T, D> {
    pub fn time(&self) -> &T {
        &self.time
    }

    pub fn give(&mut self, datum: D) {
        self.port.give(&self.time, datum);
    }

    pub fn give_iterator(&mut self, data: impl IntoIterator<Item = D>) {
        for datum in data {
            self.port.give(&self.time, datum);
        }
    }

    /// Sends and empties `data`.
    pub fn give_vec(&mut self, data: &mut Vec<D>) {
        for datum in data.drain(..) {
            self.port.give(&self.time, datum);
        }
    }
}

impl<T: Timestamp, D: Clone> Drop for Session<'_, T, D> {
    fn drop(&mut self) {
        self.port.flush(&self.time);
    }
}

/// An operator input: queued messages and a view of the input frontier.
pub struct InputHandle<T: Timestamp, D> {
    edge: usize,
    summary: T::Summary,
    receiver: Receiver<Message<T, D>>,
    queue: VecDeque<Message<T, D>>,
    frontier: Vec<T>,
    links: Vec<OutputLink<T>>,
    consumed: ChangeBatch<Pointstamp<T>>,
    current: Option<(T, Vec<D>)>,
    counters: Rc<Counters>,
}

impl<T: Timestamp, D> InputHandle<T, D> {
    pub(crate) fn new(
        edge: usize,
        summary: T::Summary,
        receiver: Receiver<Message<T, D>>,
        links: Vec<OutputLink<T>>,
        counters: Rc<Counters>,
    ) -> Self {
        InputHandle {
            edge,
            summary,
            receiver,
            queue: VecDeque::new(),
            frontier: vec![T::minimum()],
            links,
            consumed: ChangeBatch::new(),
            current: None,
            counters,
        }
    }

    /// Lower bounds on times that may still arrive, as of the start of this
    /// invocation. Empty once the input is exhausted.
    pub fn frontier(&self) -> &[T] {
        &self.frontier
    }

    /// True if `time` may still arrive on this input.
    pub fn frontier_leq(&self, time: &T) -> bool {
        self.frontier.iter().any(|f| f.less_equal(time))
    }

    /// The next batch with a token reference for its time. The batch is
    /// consumed whether or not the caller empties it.
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Option<(TimestampTokenRef<'_, T>, &mut Vec<D>)> {
        let message = self.queue.pop_front()?;
        let time = self.summary.results_in(&message.time);
        self.consumed.update(Pointstamp::new(message.time, Location::Edge(self.edge)), -1);
        bump(&self.counters.deliveries);
        if !self.frontier_leq(&time) {
            bump(&self.counters.safety_violations);
        }
        let InputHandle { current, links, .. } = self;
        let (time, data) = current.insert((time, message.data));
        Some((TimestampTokenRef::new(time, links), data))
    }

    pub fn for_each(&mut self, mut logic: impl FnMut(TimestampTokenRef<'_, T>, &mut Vec<D>)) {
        while let Some((token, data)) = self.next() {
            logic(token, data);
        }
    }

    pub fn has_pending(&self) -> bool {
        !self.queue.is_empty()
    }

    pub(crate) fn pull(&mut self) -> bool {
        let before = self.queue.len();
        while let Ok(message) = self.receiver.try_recv() {
            self.queue.push_back(message);
        }
        self.queue.len() > before
    }

    pub(crate) fn set_frontier(&mut self, frontier: &[T]) {
        self.frontier.clear();
        self.frontier.extend_from_slice(frontier);
    }

    pub(crate) fn drain_consumed(&mut self, batch: &mut ChangeBatch<Pointstamp<T>>) {
        self.current = None;
        self.consumed.drain_into(batch);
    }
}
