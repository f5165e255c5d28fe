use std::cell::RefCell;
use std::rc::Rc;

use super::handles::OutputPort;
use super::scope::{Activator, Data};
use super::worker::OperatorCore;
use crate::progress::{ChangeBatch, Pointstamp, Timestamp};
use crate::tokens::{TimestampToken, TokenBookkeeping, TokenError};

pub(crate) struct InputState<T: Timestamp, D> {
    token: Option<TimestampToken<T>>,
    port: Rc<RefCell<OutputPort<T, D>>>,
    activator: Activator,
    activated: bool,
}

impl<T: Timestamp, D: Data> InputState<T, D> {
    pub fn new(token: TimestampToken<T>, port: Rc<RefCell<OutputPort<T, D>>>, activator: Activator) -> Self {
        InputState { token: Some(token), port, activator, activated: false }
    }

    fn flush(&mut self) {
        if let Some(token) = &self.token {
            self.port.borrow_mut().flush(token.time());
        }
        self.activated = false;
    }
}

/// Feeds records into a dataflow from outside it.
///
/// The handle holds the input's token. Its bookkeeping asks the worker to
/// accept every change at the next step, so downstream frontiers follow
/// `advance_to` promptly. Dropping the handle closes the input.
pub struct ExternalInput<T: Timestamp, D: Data> {
    state: Rc<RefCell<InputState<T, D>>>,
}

impl<T: Timestamp, D: Data> ExternalInput<T, D> {
    pub(crate) fn new(state: Rc<RefCell<InputState<T, D>>>) -> Self {
        ExternalInput { state }
    }

    /// The time at which records are currently sent.
    pub fn time(&self) -> T {
        self.state.borrow().token.as_ref().expect("input closed").time().clone()
    }

    pub fn send(&mut self, datum: D) {
        let mut state = self.state.borrow_mut();
        let state = &mut *state;
        let token = state.token.as_ref().expect("input closed");
        state.port.borrow_mut().give(token.time(), datum);
        if !state.activated {
            state.activated = true;
            state.activator.activate();
        }
    }

    pub fn send_batch(&mut self, data: impl IntoIterator<Item = D>) {
        for datum in data {
            self.send(datum);
        }
    }

    /// Cuts buffered records into messages now rather than at the next step.
    pub fn flush(&mut self) {
        self.state.borrow_mut().flush();
    }

    /// Flushes, then moves the input to `time`.
    pub fn advance_to(&mut self, time: T) -> Result<(), TokenError> {
        let mut state = self.state.borrow_mut();
        state.flush();
        state.token.as_mut().expect("input closed").downgrade(&time)
    }

    /// Flushes and discards the input's token.
    pub fn close(self) {}
}

impl<T: Timestamp, D: Data> Drop for ExternalInput<T, D> {
    fn drop(&mut self) {
        let mut state = self.state.borrow_mut();
        state.flush();
        let token = state.token.take();
        drop(state);
        drop(token);
    }
}

pub(crate) struct InputOperator<T: Timestamp, D> {
    state: Rc<RefCell<InputState<T, D>>>,
    bookkeeping: Vec<TokenBookkeeping<T>>,
}

impl<T: Timestamp, D: Data> InputOperator<T, D> {
    pub fn new(state: Rc<RefCell<InputState<T, D>>>, bookkeeping: TokenBookkeeping<T>) -> Self {
        InputOperator { state, bookkeeping: vec![bookkeeping] }
    }
}

impl<T: Timestamp, D: Data> OperatorCore<T> for InputOperator<T, D> {
    fn interested(&self) -> bool {
        false
    }

    fn invoke(&mut self) {
        self.state.borrow_mut().flush();
    }

    fn bookkeeping(&self) -> &[TokenBookkeeping<T>] {
        &self.bookkeeping
    }

    fn drain_messages(&mut self, batch: &mut ChangeBatch<Pointstamp<T>>) {
        self.state.borrow().port.borrow_mut().drain_produced(batch);
    }

    fn push_staged(&mut self) {
        self.state.borrow().port.borrow_mut().push_staged();
    }
}
