//! Dataflow construction: scopes, streams and operator builders.

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::rc::Rc;
use std::sync::mpsc::Receiver;
use std::sync::Arc;

use super::fabric::{Fabric, Message};
use super::handles::{Counters, EdgePusher, InputHandle, OutputHandle, OutputPort, Pact};
use super::input::{ExternalInput, InputOperator, InputState};
use super::worker::{GenericOperator, OperatorCore, ProbeOperator};
use crate::progress::{PortRef, Timestamp, TopologyBuilder};
use crate::tokens::{OutputLink, TimestampToken, TokenBookkeeping};

/// Records that can travel between workers.
pub trait Data: Clone + Send + 'static {}

impl<D: Clone + Send + 'static> Data for D {}

#[derive(Default)]
pub(crate) struct Activations {
    queue: Vec<usize>,
    flagged: Vec<bool>,
}

impl Activations {
    fn push(&mut self, node: usize) {
        if node >= self.flagged.len() {
            self.flagged.resize(node + 1, false);
        }
        if !self.flagged[node] {
            self.flagged[node] = true;
            self.queue.push(node);
        }
    }

    pub fn drain(&mut self) -> Vec<usize> {
        for node in self.queue.iter() {
            self.flagged[*node] = false;
        }
        std::mem::take(&mut self.queue)
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

/// Asks the worker to invoke an operator at its next step.
#[derive(Clone)]
pub struct Activator {
    node: usize,
    activations: Rc<RefCell<Activations>>,
}

impl Activator {
    pub fn activate(&self) {
        self.activations.borrow_mut().push(self.node);
    }
}

/// Facts and controls handed to an operator's constructor.
pub struct OperatorInfo {
    pub node: usize,
    pub worker: usize,
    pub peers: usize,
    activator: Activator,
    interest: Rc<Cell<bool>>,
}

impl OperatorInfo {
    pub fn activator(&self) -> Activator {
        self.activator.clone()
    }

    /// Shared switch deciding whether input frontier changes alone schedule
    /// the operator.
    pub fn frontier_interest(&self) -> FrontierInterest {
        FrontierInterest(self.interest.clone())
    }
}

/// See [`OperatorInfo::frontier_interest`].
#[derive(Clone)]
pub struct FrontierInterest(Rc<Cell<bool>>);

impl FrontierInterest {
    pub fn set(&self, interested: bool) {
        self.0.set(interested);
    }

    pub fn get(&self) -> bool {
        self.0.get()
    }
}

pub(crate) struct ScopeState<T: Timestamp> {
    pub index: usize,
    pub peers: usize,
    pub max_batch: usize,
    pub fabric: Arc<Fabric>,
    pub topology: TopologyBuilder<T>,
    pub operators: Vec<Option<Box<dyn OperatorCore<T>>>>,
    pub activations: Rc<RefCell<Activations>>,
    pub counters: Rc<Counters>,
    pub open_loops: BTreeMap<usize, String>,
}

/// The dataflow under construction on one worker.
pub struct Scope<T: Timestamp> {
    pub(crate) state: Rc<RefCell<ScopeState<T>>>,
}

impl<T: Timestamp> Clone for Scope<T> {
    fn clone(&self) -> Self {
        Scope { state: self.state.clone() }
    }
}

impl<T: Timestamp> Scope<T> {
    pub(crate) fn new(state: ScopeState<T>) -> Self {
        Scope { state: Rc::new(RefCell::new(state)) }
    }

    pub fn index(&self) -> usize {
        self.state.borrow().index
    }

    pub fn peers(&self) -> usize {
        self.state.borrow().peers
    }

    fn add_node(&self, name: &str, inputs: usize, outputs: usize) -> usize {
        let mut state = self.state.borrow_mut();
        let node = state.topology.add_node(name, inputs, outputs);
        state.operators.push(None);
        node
    }

    fn install(&self, node: usize, operator: Box<dyn OperatorCore<T>>) {
        self.state.borrow_mut().operators[node] = Some(operator);
    }

    fn activator(&self, node: usize) -> Activator {
        Activator { node, activations: self.state.borrow().activations.clone() }
    }

    fn counters(&self) -> Rc<Counters> {
        self.state.borrow().counters.clone()
    }

    fn output_port<D: Data>(&self) -> Rc<RefCell<OutputPort<T, D>>> {
        Rc::new(RefCell::new(OutputPort::new(self.counters())))
    }

    /// The bookkeeping for output 0 of `node` and its initial token.
    ///
    /// Every worker's instance starts with one token per output and every
    /// worker accounts for all of them up front, so the mint itself is not
    /// left in the bookkeeping.
    fn initial_token(&self, node: usize) -> (TokenBookkeeping<T>, TimestampToken<T>) {
        let bookkeeping = TokenBookkeeping::new(PortRef::new(node, 0));
        let token = bookkeeping.mint_initial();
        bookkeeping.drain();
        (bookkeeping, token)
    }

    /// An input fed from outside the dataflow.
    pub fn new_input<D: Data>(&mut self) -> (ExternalInput<T, D>, Stream<T, D>) {
        let node = self.add_node("Input", 0, 1);
        let (bookkeeping, token) = self.initial_token(node);
        let activator = self.activator(node);
        let hook = activator.clone();
        bookkeeping.set_flush_hook(move || hook.activate());
        let port = self.output_port::<D>();
        let state = Rc::new(RefCell::new(InputState::new(token, port.clone(), activator)));
        self.install(node, Box::new(InputOperator::new(state.clone(), bookkeeping)));
        (ExternalInput::new(state), Stream { scope: self.clone(), port: PortRef::new(node, 0), output: port })
    }

    /// A node that closes a cycle: records sent into the returned handle
    /// (see [`Stream::connect_loop`]) reappear on the returned stream with
    /// their times advanced by `summary`.
    pub fn feedback<D: Data>(&mut self, summary: T::Summary) -> (LoopHandle<T, D>, Stream<T, D>) {
        let node = self.add_node("Feedback", 1, 1);
        self.state.borrow_mut().open_loops.insert(node, "Feedback".to_string());
        let port = self.output_port::<D>();
        let stream = Stream { scope: self.clone(), port: PortRef::new(node, 0), output: port.clone() };
        (LoopHandle { node, summary, port }, stream)
    }

    /// Adds an operator with identically typed inputs and at most one
    /// output, every input connected to the output by the identity summary.
    pub(crate) fn add_operator<D1, D2, B, L>(
        &self,
        name: &str,
        inputs: Vec<(Stream<T, D1>, Pact<D1>)>,
        has_output: bool,
        interest: bool,
        constructor: B,
    ) -> Stream<T, D2>
    where
        D1: Data,
        D2: Data,
        B: FnOnce(Vec<TimestampToken<T>>, OperatorInfo) -> L,
        L: FnMut(&mut [InputHandle<T, D1>], &mut OutputHandle<T, D2>) + 'static,
    {
        let node = self.add_node(name, inputs.len(), has_output as usize);
        let (bookkeeping, tokens) = if has_output {
            let (bookkeeping, token) = self.initial_token(node);
            (Some(bookkeeping), vec![token])
        } else {
            (None, Vec::new())
        };
        let links: Vec<OutputLink<T>> = bookkeeping
            .iter()
            .map(|b| OutputLink { bookkeeping: b.clone(), summary: Some(Default::default()) })
            .collect();
        let handles = inputs
            .into_iter()
            .enumerate()
            .map(|(port, (stream, pact))| {
                let (edge, receiver) = stream.connect(PortRef::new(node, port), pact, Default::default());
                InputHandle::new(edge, Default::default(), receiver, links.clone(), self.counters())
            })
            .collect();
        let port = self.output_port::<D2>();
        let interest = Rc::new(Cell::new(interest));
        let (worker, peers) = (self.index(), self.peers());
        let info = OperatorInfo { node, worker, peers, activator: self.activator(node), interest: interest.clone() };
        let logic = constructor(tokens, info);
        let output = OutputHandle::new(port.clone(), bookkeeping.clone(), 0);
        let operator = GenericOperator {
            inputs: handles,
            output,
            port: port.clone(),
            bookkeeping: bookkeeping.into_iter().collect(),
            interest,
            logic,
        };
        self.install(node, Box::new(operator));
        Stream { scope: self.clone(), port: PortRef::new(node, 0), output: port }
    }
}

/// The not-yet-connected input of a [`Scope::feedback`] node.
pub struct LoopHandle<T: Timestamp, D> {
    node: usize,
    summary: T::Summary,
    port: Rc<RefCell<OutputPort<T, D>>>,
}

/// The output of an operator, to be consumed by other operators.
pub struct Stream<T: Timestamp, D> {
    scope: Scope<T>,
    port: PortRef,
    output: Rc<RefCell<OutputPort<T, D>>>,
}

impl<T: Timestamp, D> Clone for Stream<T, D> {
    fn clone(&self) -> Self {
        Stream { scope: self.scope.clone(), port: self.port, output: self.output.clone() }
    }
}

impl<T: Timestamp, D: Data> Stream<T, D> {
    pub fn scope(&self) -> Scope<T> {
        self.scope.clone()
    }

    /// The operator output producing this stream.
    pub fn port(&self) -> PortRef {
        self.port
    }

    fn connect(&self, target: PortRef, pact: Pact<D>, summary: T::Summary) -> (usize, Receiver<Message<T, D>>) {
        let mut state = self.scope.state.borrow_mut();
        let edge = state.topology.add_edge_with(self.port, target, summary);
        let (senders, receiver) = state.fabric.channel::<Message<T, D>>(edge, state.index);
        let pusher = EdgePusher::new(edge, state.index, pact, senders, state.max_batch);
        self.output.borrow_mut().add_pusher(pusher);
        (edge, receiver)
    }

    /// A one-input operator scheduled only when input arrives or it asks to
    /// be. The constructor receives the operator's initial token.
    pub fn unary<D2, B, L>(&self, pact: Pact<D>, name: &str, constructor: B) -> Stream<T, D2>
    where
        D2: Data,
        B: FnOnce(TimestampToken<T>, OperatorInfo) -> L,
        L: FnMut(&mut InputHandle<T, D>, &mut OutputHandle<T, D2>) + 'static,
    {
        self.unary_with_interest(pact, name, false, constructor)
    }

    /// As [`unary`](Self::unary), but also scheduled whenever the input
    /// frontier changes.
    pub fn unary_frontier<D2, B, L>(&self, pact: Pact<D>, name: &str, constructor: B) -> Stream<T, D2>
    where
        D2: Data,
        B: FnOnce(TimestampToken<T>, OperatorInfo) -> L,
        L: FnMut(&mut InputHandle<T, D>, &mut OutputHandle<T, D2>) + 'static,
    {
        self.unary_with_interest(pact, name, true, constructor)
    }

    fn unary_with_interest<D2, B, L>(&self, pact: Pact<D>, name: &str, interest: bool, constructor: B) -> Stream<T, D2>
    where
        D2: Data,
        B: FnOnce(TimestampToken<T>, OperatorInfo) -> L,
        L: FnMut(&mut InputHandle<T, D>, &mut OutputHandle<T, D2>) + 'static,
    {
        self.scope.add_operator(name, vec![(self.clone(), pact)], true, interest, move |mut tokens, info| {
            let mut logic = constructor(tokens.pop().unwrap(), info);
            move |inputs: &mut [InputHandle<T, D>], output: &mut OutputHandle<T, D2>| logic(&mut inputs[0], output)
        })
    }

    /// A two-input operator over streams of the same record type, scheduled
    /// on input and on frontier changes.
    pub fn binary_frontier<D2, B, L>(
        &self,
        other: &Stream<T, D>,
        pact1: Pact<D>,
        pact2: Pact<D>,
        name: &str,
        constructor: B,
    ) -> Stream<T, D2>
    where
        D2: Data,
        B: FnOnce(TimestampToken<T>, OperatorInfo) -> L,
        L: FnMut(&mut InputHandle<T, D>, &mut InputHandle<T, D>, &mut OutputHandle<T, D2>) + 'static,
    {
        let inputs = vec![(self.clone(), pact1), (other.clone(), pact2)];
        self.scope.add_operator(name, inputs, true, true, move |mut tokens, info| {
            let mut logic = constructor(tokens.pop().unwrap(), info);
            move |inputs: &mut [InputHandle<T, D>], output: &mut OutputHandle<T, D2>| {
                let (first, second) = inputs.split_at_mut(1);
                logic(&mut first[0], &mut second[0], output)
            }
        })
    }

    /// Merges two streams.
    pub fn concat(&self, other: &Stream<T, D>) -> Stream<T, D> {
        let inputs = vec![(self.clone(), Pact::Pipeline), (other.clone(), Pact::Pipeline)];
        self.scope.add_operator("Concat", inputs, true, false, |tokens, _info| {
            drop(tokens);
            |inputs: &mut [InputHandle<T, D>], output: &mut OutputHandle<T, D>| {
                for input in inputs.iter_mut() {
                    input.for_each(|token, data| output.session(&token).give_vec(data));
                }
            }
        })
    }

    /// An operator without outputs.
    pub fn sink<B, L>(&self, pact: Pact<D>, name: &str, frontier_interest: bool, constructor: B)
    where
        B: FnOnce(OperatorInfo) -> L,
        L: FnMut(&mut InputHandle<T, D>) + 'static,
    {
        self.scope.add_operator::<D, (), _, _>(name, vec![(self.clone(), pact)], false, frontier_interest, move |_, info| {
            let mut logic = constructor(info);
            move |inputs: &mut [InputHandle<T, D>], _output: &mut OutputHandle<T, ()>| logic(&mut inputs[0])
        });
    }

    /// Consumes the stream and exposes the frontier at its end.
    pub fn probe(&self) -> ProbeHandle<T> {
        let node = self.scope.add_node("Probe", 1, 0);
        let (edge, receiver) = self.connect(PortRef::new(node, 0), Pact::Pipeline, Default::default());
        let input = InputHandle::new(edge, Default::default(), receiver, Vec::new(), self.scope.counters());
        let frontier = Rc::new(RefCell::new(vec![T::minimum()]));
        self.scope.install(node, Box::new(ProbeOperator { input, frontier: frontier.clone() }));
        ProbeHandle { frontier }
    }

    /// Collects every record reaching this worker, with its time.
    pub fn capture(&self) -> Rc<RefCell<Vec<(T, D)>>> {
        let captured = Rc::new(RefCell::new(Vec::new()));
        let sink = captured.clone();
        self.sink(Pact::Pipeline, "Capture", false, move |_info| {
            move |input: &mut InputHandle<T, D>| {
                input.for_each(|token, data| {
                    let time = token.time();
                    sink.borrow_mut().extend(data.drain(..).map(|d| (time.clone(), d)));
                })
            }
        });
        captured
    }

    /// Feeds this stream into a feedback node, closing the cycle.
    pub fn connect_loop(&self, handle: LoopHandle<T, D>) {
        let LoopHandle { node, summary, port } = handle;
        let (edge, receiver) = self.connect(PortRef::new(node, 0), Pact::Pipeline, summary.clone());
        let (bookkeeping, token) = self.scope.initial_token(node);
        drop(token);
        let links = vec![OutputLink { bookkeeping: bookkeeping.clone(), summary: Some(Default::default()) }];
        let input = InputHandle::new(edge, summary, receiver, links, self.scope.counters());
        let operator = GenericOperator {
            inputs: vec![input],
            output: OutputHandle::new(port.clone(), Some(bookkeeping.clone()), 0),
            port,
            bookkeeping: vec![bookkeeping],
            interest: Rc::new(Cell::new(false)),
            logic: |inputs: &mut [InputHandle<T, D>], output: &mut OutputHandle<T, D>| {
                inputs[0].for_each(|token, data| output.session(&token).give_vec(data));
            },
        };
        self.scope.install(node, Box::new(operator));
        self.scope.state.borrow_mut().open_loops.remove(&node);
    }
}

/// Observes the frontier at the end of a stream.
#[derive(Clone)]
pub struct ProbeHandle<T> {
    frontier: Rc<RefCell<Vec<T>>>,
}

impl<T: Timestamp> ProbeHandle<T> {
    /// True if some time strictly before `time` may still arrive.
    pub fn less_than(&self, time: &T) -> bool {
        self.frontier.borrow().iter().any(|f| f.less_than(time))
    }

    /// True if `time` itself may still arrive.
    pub fn less_equal(&self, time: &T) -> bool {
        self.frontier.borrow().iter().any(|f| f.less_equal(time))
    }

    /// True once nothing more can arrive.
    pub fn done(&self) -> bool {
        self.frontier.borrow().is_empty()
    }

    pub fn frontier(&self) -> Vec<T> {
        self.frontier.borrow().clone()
    }
}
