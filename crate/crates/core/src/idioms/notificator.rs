use std::collections::BTreeMap;

use crate::progress::Timestamp;
use crate::runtime::{Data, InputHandle, OperatorInfo, OutputHandle, Pact, Stream};
use crate::tokens::{TimestampToken, TimestampTokenRef};

/// How many ready times one [`Notificator::drain`] delivers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DrainMode {
    /// Every ready time.
    All,
    /// Only the least ready time, so each delivery costs an invocation.
    OnePerDrain,
}

/// Pending notification requests, each backed by a retained token.
///
/// A request for time `t` is delivered once the input frontier no longer
/// allows `t`. Requests for a time already passed are delivered at the next
/// drain. Ready times are delivered in ascending `Ord` order, which for
/// incomparable times is lexicographic.
pub struct Notificator<T: Timestamp> {
    pending: BTreeMap<T, TimestampToken<T>>,
    mode: DrainMode,
}

impl<T: Timestamp> Notificator<T> {
    pub fn new(mode: DrainMode) -> Self {
        Notificator { pending: BTreeMap::new(), mode }
    }

    /// Requests a notification at the token's time. A second request for the
    /// same time is merged into the first and its token discarded.
    pub fn notify_at(&mut self, token: TimestampToken<T>) {
        self.pending.entry(token.time().clone()).or_insert(token);
    }

    /// Requests a notification at the reference's time, retaining it only if
    /// no request for that time is pending.
    pub fn request(&mut self, token: &TimestampTokenRef<'_, T>) {
        if !self.pending.contains_key(token.time()) {
            self.notify_at(token.retain());
        }
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn pending(&self) -> impl Iterator<Item = &T> {
        self.pending.keys()
    }

    fn is_ready(frontier: &[T], time: &T) -> bool {
        !frontier.iter().any(|f| f.less_equal(time))
    }

    /// True if some pending time is no longer allowed by `frontier`.
    pub fn has_ready(&self, frontier: &[T]) -> bool {
        if T::IS_TOTAL {
            self.pending.keys().next().is_some_and(|t| Self::is_ready(frontier, t))
        } else {
            self.pending.keys().any(|t| Self::is_ready(frontier, t))
        }
    }

    /// Hands ready requests to `deliver`, in ascending order. The token is
    /// discarded when `deliver` returns unless it keeps it. Returns the
    /// number delivered.
    ///
    /// A `deliver` that requests its own time again will be notified again
    /// at the next drain, forever.
    pub fn drain(&mut self, frontier: &[T], mut deliver: impl FnMut(TimestampToken<T>)) -> usize {
        let limit = match self.mode {
            DrainMode::All => usize::MAX,
            DrainMode::OnePerDrain => 1,
        };
        let ready: Vec<T> = if T::IS_TOTAL {
            self.pending.keys().take_while(|t| Self::is_ready(frontier, t)).take(limit).cloned().collect()
        } else {
            self.pending.keys().filter(|t| Self::is_ready(frontier, t)).take(limit).cloned().collect()
        };
        for time in ready.iter() {
            let token = self.pending.remove(time).unwrap();
            deliver(token);
        }
        ready.len()
    }
}

/// A one-input operator driven by a [`Notificator`].
///
/// The operator is scheduled by frontier changes only while requests are
/// pending. In [`DrainMode::OnePerDrain`] it reschedules itself while ready
/// requests remain, so each delivered time costs one invocation.
pub fn unary_notify<T, D1, D2, B, L>(
    stream: &Stream<T, D1>,
    pact: Pact<D1>,
    name: &str,
    mode: DrainMode,
    constructor: B,
) -> Stream<T, D2>
where
    T: Timestamp,
    D1: Data,
    D2: Data,
    B: FnOnce(TimestampToken<T>, &OperatorInfo) -> L,
    L: FnMut(&mut InputHandle<T, D1>, &mut OutputHandle<T, D2>, &mut Notificator<T>) + 'static,
{
    stream.unary_frontier(pact, name, move |token, info| {
        let mut logic = constructor(token, &info);
        let interest = info.frontier_interest();
        let activator = info.activator();
        let mut notificator = Notificator::new(mode);
        interest.set(false);
        move |input: &mut InputHandle<T, D1>, output: &mut OutputHandle<T, D2>| {
            logic(input, output, &mut notificator);
            interest.set(!notificator.is_empty());
            if mode == DrainMode::OnePerDrain && notificator.has_ready(input.frontier()) {
                activator.activate();
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::progress::{PartialOrder, PortRef, Product};
    use crate::tokens::TokenBookkeeping;
    use rand::{Rng, SeedableRng};

    fn delivered<T: Timestamp>(n: &mut Notificator<T>, frontier: &[T]) -> Vec<T> {
        let mut times = Vec::new();
        n.drain(frontier, |tok| times.push(tok.time().clone()));
        times
    }

    #[test]
    fn pending_until_frontier_passes() {
        let bk = TokenBookkeeping::<u64>::new(PortRef::new(0, 0));
        let mut n = Notificator::new(DrainMode::All);
        n.notify_at(bk.mint(5));
        assert!(delivered(&mut n, &[0]).is_empty());
        assert_eq!(n.len(), 1);
        n.notify_at(bk.mint(5));
        assert_eq!(n.len(), 1);
        assert_eq!(delivered(&mut n, &[7]), vec![5]);
        assert!(bk.drain().is_empty());
    }

    #[test]
    fn ordered_and_partial_release() {
        let bk = TokenBookkeeping::<u64>::new(PortRef::new(0, 0));
        let mut n = Notificator::new(DrainMode::All);
        n.notify_at(bk.mint(5));
        n.notify_at(bk.mint(3));
        assert_eq!(delivered(&mut n, &[4]), vec![3]);
        assert_eq!(delivered(&mut n, &[10]), vec![5]);
        n.notify_at(bk.mint(5));
        n.notify_at(bk.mint(3));
        assert_eq!(delivered(&mut n, &[]), vec![3, 5]);
    }

    #[test]
    fn incomparable_times_release_lexicographically() {
        let bk = TokenBookkeeping::<Product>::new(PortRef::new(0, 0));
        let mut n = Notificator::new(DrainMode::All);
        n.notify_at(bk.mint(Product::new(1, 0)));
        n.notify_at(bk.mint(Product::new(0, 1)));
        assert_eq!(delivered(&mut n, &[Product::new(2, 2)]), vec![Product::new(0, 1), Product::new(1, 0)]);
    }

    #[test]
    fn one_per_drain() {
        let bk = TokenBookkeeping::<u64>::new(PortRef::new(0, 0));
        let mut n = Notificator::new(DrainMode::OnePerDrain);
        for t in [1, 2, 3] {
            n.notify_at(bk.mint(t));
        }
        assert_eq!(delivered(&mut n, &[10]), vec![1]);
        assert!(n.has_ready(&[10]));
        assert_eq!(delivered(&mut n, &[10]), vec![2]);
        assert_eq!(delivered(&mut n, &[10]), vec![3]);
        assert!(!n.has_ready(&[10]));
    }

    /// Straightforward model: a sorted list of distinct requested times,
    /// released when no frontier element is `less_equal`.
    fn reference(requests: &[Product], frontier: &[Product]) -> (Vec<Product>, Vec<Product>) {
        let mut all: Vec<Product> = requests.to_vec();
        all.sort();
        all.dedup();
        all.into_iter().partition(|t| !frontier.iter().any(|f| f.less_equal(t)))
    }

    #[test]
    fn matches_reference_on_random_traces() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let bk = TokenBookkeeping::<Product>::new(PortRef::new(0, 0));
        for _ in 0..500 {
            let mut n = Notificator::new(DrainMode::All);
            let mut outstanding: Vec<Product> = Vec::new();
            for _ in 0..rng.gen_range(1..6) {
                for _ in 0..rng.gen_range(0..5) {
                    let t = Product::new(rng.gen_range(0..5), rng.gen_range(0..5));
                    n.notify_at(bk.mint(t));
                    outstanding.push(t);
                }
                let frontier: Vec<Product> = crate::progress::Antichain::from_iter(
                    (0..rng.gen_range(0..3)).map(|_| Product::new(rng.gen_range(0..6), rng.gen_range(0..6))),
                )
                .into_sorted_vec();
                let (expect, keep) = reference(&outstanding, &frontier);
                assert_eq!(delivered(&mut n, &frontier), expect);
                outstanding = keep;
                assert_eq!(n.pending().cloned().collect::<Vec<_>>(), outstanding);
            }
        }
    }
}
