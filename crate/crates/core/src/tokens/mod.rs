//! Timestamp tokens and the bookkeeping that records their life-cycle.
//!
//! A [`TimestampToken`] entitles its holder to produce messages at one time
//! on one operator output. Creating, cloning, downgrading and dropping tokens
//! appends count deltas to a [`TokenBookkeeping`] shared with the runtime,
//! which drains it after the operator yields. Nothing here talks to the
//! runtime directly.
//!
//! Tokens are reference counted with `Rc` and so are confined to the thread
//! that created them.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::progress::{ChangeBatch, PathSummary, PortRef, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("cannot downgrade a token at {current} to {requested}: not in advance")]
    NotInAdvance { current: String, requested: String },
}

struct Inner<T> {
    port: PortRef,
    changes: ChangeBatch<T>,
    dirty: bool,
    hook: Option<Rc<dyn Fn()>>,
}

/// Pending token deltas for one operator output.
///
/// Cloning yields another handle to the same bookkeeping.
pub struct TokenBookkeeping<T: Timestamp> {
    inner: Rc<RefCell<Inner<T>>>,
}

impl<T: Timestamp> Clone for TokenBookkeeping<T> {
    fn clone(&self) -> Self {
        TokenBookkeeping { inner: self.inner.clone() }
    }
}

impl<T: Timestamp> TokenBookkeeping<T> {
    pub fn new(port: PortRef) -> Self {
        TokenBookkeeping {
            inner: Rc::new(RefCell::new(Inner {
                port,
                changes: ChangeBatch::new(),
                dirty: false,
                hook: None,
            })),
        }
    }

    /// The operator output this bookkeeping accounts for.
    pub fn port(&self) -> PortRef {
        self.inner.borrow().port
    }

    /// Creates a token at `time`, recording `+1`.
    ///
    /// The runtime mints one token per output at construction; other code
    /// should obtain tokens from existing ones or from received messages.
    pub fn mint(&self, time: T) -> TimestampToken<T> {
        self.record(time.clone(), 1);
        TimestampToken { time, bookkeeping: self.clone() }
    }

    /// The token every operator output starts with.
    pub fn mint_initial(&self) -> TimestampToken<T> {
        self.mint(T::minimum())
    }

    /// Installs a callback run after every recorded change. Input handles use
    /// it to ask the runtime to accept their updates promptly.
    pub fn set_flush_hook(&self, hook: impl Fn() + 'static) {
        self.inner.borrow_mut().hook = Some(Rc::new(hook));
    }

    pub fn is_dirty(&self) -> bool {
        self.inner.borrow().dirty
    }

    /// Takes the accumulated deltas, compacted, and clears the dirty flag.
    pub fn drain(&self) -> ChangeBatch<T> {
        let mut inner = self.inner.borrow_mut();
        inner.dirty = false;
        let mut changes = std::mem::take(&mut inner.changes);
        changes.compact();
        changes
    }

    pub fn same_as(&self, other: &TokenBookkeeping<T>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    fn record(&self, time: T, delta: i64) {
        let hook = {
            let mut inner = self.inner.borrow_mut();
            inner.changes.update(time, delta);
            inner.dirty = true;
            inner.hook.clone()
        };
        if let Some(hook) = hook {
            hook();
        }
    }
}

impl<T: Timestamp> fmt::Debug for TokenBookkeeping<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("TokenBookkeeping").field("port", &inner.port).field("dirty", &inner.dirty).finish()
    }
}

/// The right to send messages at `time` (or later) on one operator output.
///
/// `Clone` duplicates the token and `Drop` discards it; both are recorded.
/// The time can only move forward, through [`downgrade`](Self::downgrade).
pub struct TimestampToken<T: Timestamp> {
    time: T,
    bookkeeping: TokenBookkeeping<T>,
}

impl<T: Timestamp> TimestampToken<T> {
    pub fn time(&self) -> &T {
        &self.time
    }

    pub fn port(&self) -> PortRef {
        self.bookkeeping.port()
    }

    pub fn bookkeeping(&self) -> &TokenBookkeeping<T> {
        &self.bookkeeping
    }

    /// Moves the token to `new_time`, which must be in advance of the
    /// current time. Downgrading to the current time changes nothing.
    pub fn downgrade(&mut self, new_time: &T) -> Result<(), TokenError> {
        if !self.time.less_equal(new_time) {
            return Err(self.not_in_advance(new_time));
        }
        if self.time != *new_time {
            self.bookkeeping.record(new_time.clone(), 1);
            let old = std::mem::replace(&mut self.time, new_time.clone());
            self.bookkeeping.record(old, -1);
        }
        Ok(())
    }

    /// A new token at `new_time`, leaving this one untouched.
    pub fn delayed(&self, new_time: &T) -> Result<TimestampToken<T>, TokenError> {
        if !self.time.less_equal(new_time) {
            return Err(self.not_in_advance(new_time));
        }
        Ok(self.bookkeeping.mint(new_time.clone()))
    }

    /// Discards the token. Equivalent to dropping it.
    pub fn discard(self) {}

    fn not_in_advance(&self, requested: &T) -> TokenError {
        TokenError::NotInAdvance { current: format!("{:?}", self.time), requested: format!("{requested:?}") }
    }
}

impl<T: Timestamp> Clone for TimestampToken<T> {
    fn clone(&self) -> Self {
        self.bookkeeping.mint(self.time.clone())
    }
}

impl<T: Timestamp> Drop for TimestampToken<T> {
    fn drop(&mut self) {
        self.bookkeeping.record(self.time.clone(), -1);
    }
}

impl<T: Timestamp> fmt::Debug for TimestampToken<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimestampToken").field("time", &self.time).field("port", &self.port()).finish()
    }
}

/// An operator output as seen from one of its inputs: where retained tokens
/// are recorded and how times advance from the input to that output.
pub struct OutputLink<T: Timestamp> {
    pub bookkeeping: TokenBookkeeping<T>,
    /// `None` if the input cannot produce output on this port.
    pub summary: Option<T::Summary>,
}

impl<T: Timestamp> Clone for OutputLink<T> {
    fn clone(&self) -> Self {
        OutputLink { bookkeeping: self.bookkeeping.clone(), summary: self.summary.clone() }
    }
}

/// A borrowed token that arrives with a batch of input.
///
/// It allows sending at its time while the batch is being processed, and
/// costs nothing unless [`retain`](Self::retain)ed.
pub struct TimestampTokenRef<'a, T: Timestamp> {
    time: &'a T,
    outputs: &'a [OutputLink<T>],
}

impl<'a, T: Timestamp> TimestampTokenRef<'a, T> {
    pub fn new(time: &'a T, outputs: &'a [OutputLink<T>]) -> Self {
        TimestampTokenRef { time, outputs }
    }

    pub fn time(&self) -> &'a T {
        self.time
    }

    /// The time this reference allows on output `port`.
    ///
    /// # Panics
    ///
    /// If the operator has no such output or the input is not connected to it.
    pub fn time_for(&self, port: usize) -> T {
        let link = self.outputs.get(port).expect("no such output");
        let summary = link.summary.as_ref().expect("input is not connected to this output");
        summary.results_in(self.time)
    }

    /// An owned token for the first output.
    pub fn retain(&self) -> TimestampToken<T> {
        self.retain_for(0)
    }

    /// An owned token for output `port`.
    pub fn retain_for(&self, port: usize) -> TimestampToken<T> {
        self.outputs[port].bookkeeping.mint(self.time_for(port))
    }

    pub(crate) fn links(&self) -> &'a [OutputLink<T>] {
        self.outputs
    }
}

impl<T: Timestamp> fmt::Debug for TimestampTokenRef<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimestampTokenRef").field("time", self.time).finish()
    }
}
