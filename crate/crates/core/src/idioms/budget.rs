use std::collections::{BTreeMap, VecDeque};

use crate::progress::Timestamp;
use crate::runtime::{Activator, Data, OutputHandle};
use crate::tokens::TimestampToken;

/// Output produced a bounded amount at a time.
///
/// Pending records are held with a token for their time, so downstream
/// frontiers stay correct while output is deferred. Each [`emit`] sends at
/// most `limit` records, oldest times first, and asks to be rescheduled if
/// any remain.
///
/// [`emit`]: OutputBudget::emit
pub struct OutputBudget<T: Timestamp, D> {
    limit: usize,
    pending: BTreeMap<T, (TimestampToken<T>, VecDeque<D>)>,
}

impl<T: Timestamp, D: Data> OutputBudget<T, D> {
    pub fn new(limit: usize) -> Self {
        assert!(limit > 0, "budget must be positive");
        OutputBudget { limit, pending: BTreeMap::new() }
    }

    /// Queues records to send with `token`. Records for a time already
    /// queued join that queue and the extra token is discarded.
    pub fn push(&mut self, token: TimestampToken<T>, data: impl IntoIterator<Item = D>) {
        let entry = self.pending.entry(token.time().clone()).or_insert_with(|| (token, VecDeque::new()));
        entry.1.extend(data);
    }

    pub fn pending_records(&self) -> usize {
        self.pending.values().map(|(_, q)| q.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Sends up to the budget and returns whether work remains, in which
    /// case `activator` has been asked to run the operator again.
    pub fn emit(&mut self, output: &mut OutputHandle<T, D>, activator: &Activator) -> bool {
        let mut left = self.limit;
        while left > 0 {
            let Some(mut entry) = self.pending.first_entry() else { break };
            let (token, queue) = entry.get_mut();
            let n = left.min(queue.len());
            output.session(&*token).give_iterator(queue.drain(..n));
            left -= n;
            if queue.is_empty() {
                entry.remove();
            }
        }
        let remaining = !self.pending.is_empty();
        if remaining {
            activator.activate();
        }
        remaining
    }
}
