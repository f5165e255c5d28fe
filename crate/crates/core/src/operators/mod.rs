//! Operators built on the token API: a tumbling windowed average, a rolling
//! word count, and stateless forwarding stages.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use crate::progress::Timestamp;
use crate::runtime::{Data, InputHandle, OutputHandle, Pact, Stream};

mod window;

pub use window::{singleton_frontier, tumbling_average, window_end, WindowData, WindowState};

/// A stable hash for routing keys between workers.
pub fn hash_key<K: Hash + ?Sized>(key: &K) -> u64 {
    let mut hasher = DefaultHasher::new();
    key.hash(&mut hasher);
    hasher.finish()
}

/// Running counts per word.
pub struct CountState<W> {
    counts: HashMap<W, u64>,
}

impl<W: Hash + Eq + Clone> CountState<W> {
    pub fn new() -> Self {
        CountState { counts: HashMap::new() }
    }

    /// Counts one occurrence and returns the new count.
    pub fn observe(&mut self, word: &W) -> u64 {
        let count = self.counts.entry(word.clone()).or_insert(0);
        *count += 1;
        *count
    }

    pub fn get(&self, word: &W) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }
}

impl<W: Hash + Eq + Clone> Default for CountState<W> {
    fn default() -> Self {
        Self::new()
    }
}

/// Emits `(word, count so far)` for every word, at the word's own time.
/// Words are routed by hash so each word is counted on one worker.
pub fn rolling_count<T, W>(stream: &Stream<T, W>) -> Stream<T, (W, u64)>
where
    T: Timestamp,
    W: Data + Hash + Eq,
{
    stream.unary(Pact::exchange(|w: &W| hash_key(w)), "RollingCount", |token, _info| {
        drop(token);
        let mut state = CountState::new();
        move |input: &mut InputHandle<T, W>, output: &mut OutputHandle<T, (W, u64)>| {
            input.for_each(|tok, words| {
                let mut session = output.session(&tok);
                for word in words.drain(..) {
                    let count = state.observe(&word);
                    session.give((word, count));
                }
            });
        }
    })
}

/// Forwards every batch unchanged. Never holds a token, so it is never
/// scheduled for frontier changes alone.
pub fn noop_forward<T: Timestamp, D: Data>(stream: &Stream<T, D>, pact: Pact<D>, name: &str) -> Stream<T, D> {
    stream.unary(pact, name, |token, _info| {
        drop(token);
        |input: &mut InputHandle<T, D>, output: &mut OutputHandle<T, D>| {
            input.for_each(|tok, data| output.session(&tok).give_vec(data));
        }
    })
}

pub fn map<T, D1, D2>(stream: &Stream<T, D1>, mut f: impl FnMut(D1) -> D2 + 'static) -> Stream<T, D2>
where
    T: Timestamp,
    D1: Data,
    D2: Data,
{
    stream.unary(Pact::Pipeline, "Map", |token, _info| {
        drop(token);
        move |input: &mut InputHandle<T, D1>, output: &mut OutputHandle<T, D2>| {
            input.for_each(|tok, data| output.session(&tok).give_iterator(data.drain(..).map(&mut f)));
        }
    })
}

pub fn filter<T, D>(stream: &Stream<T, D>, mut predicate: impl FnMut(&D) -> bool + 'static) -> Stream<T, D>
where
    T: Timestamp,
    D: Data,
{
    stream.unary(Pact::Pipeline, "Filter", |token, _info| {
        drop(token);
        move |input: &mut InputHandle<T, D>, output: &mut OutputHandle<T, D>| {
            input.for_each(|tok, data| {
                data.retain(&mut predicate);
                if !data.is_empty() {
                    output.session(&tok).give_vec(data);
                }
            });
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::{Cluster, Config};

    #[test]
    fn rolling_count_counts_in_order() {
        let mut cluster = Cluster::<u64>::new(Config::new(1));
        let mut built = cluster
            .dataflow(|scope| {
                let (input, words) = scope.new_input::<&'static str>();
                (input, rolling_count(&words).capture())
            })
            .unwrap();
        let (mut input, captured) = built.pop().unwrap();
        input.send("a");
        input.advance_to(1).unwrap();
        input.send("b");
        input.advance_to(2).unwrap();
        input.send("a");
        drop(input);
        cluster.run_until_quiescent().unwrap();
        assert_eq!(*captured.borrow(), vec![(0, ("a", 1)), (1, ("b", 1)), (2, ("a", 2))]);
    }

    #[test]
    fn stateless_stages_compose() {
        let mut cluster = Cluster::<u64>::new(Config::new(2));
        let built = cluster
            .dataflow(|scope| {
                let (input, stream) = scope.new_input::<u64>();
                let mut s = stream;
                for i in 0..16 {
                    s = noop_forward(&s, Pact::exchange(|x: &u64| *x), &format!("Noop{i}"));
                }
                let evens = filter(&map(&s, |x| x * 3), |x| x % 2 == 0);
                (input, evens.capture())
            })
            .unwrap();
        let mut captures = Vec::new();
        for (index, (mut input, captured)) in built.into_iter().enumerate() {
            if index == 0 {
                input.send_batch(0..100);
            }
            captures.push(captured);
        }
        cluster.run_until_quiescent().unwrap();
        let mut got: Vec<u64> = captures.iter().flat_map(|c| c.borrow().iter().map(|(_, x)| *x).collect::<Vec<_>>()).collect();
        got.sort();
        assert_eq!(got, (0..100).map(|x| x * 3).filter(|x| x % 2 == 0).collect::<Vec<_>>());
    }

    #[test]
    fn tumbling_average_end_to_end() {
        let mut cluster = Cluster::<u64>::new(Config::new(1));
        let mut built = cluster
            .dataflow(|scope| {
                let (input, stream) = scope.new_input::<u64>();
                (input, tumbling_average(&stream, 10).capture())
            })
            .unwrap();
        let (mut input, captured) = built.pop().unwrap();
        input.advance_to(3).unwrap();
        input.send(4);
        input.advance_to(7).unwrap();
        input.send(8);
        input.advance_to(25).unwrap();
        input.send(5);
        input.advance_to(100).unwrap();
        while cluster.step().unwrap() {}
        assert_eq!(*captured.borrow(), vec![(10, 6.0), (30, 5.0)]);
        drop(input);
        cluster.run_until_quiescent().unwrap();
        assert_eq!(captured.borrow().len(), 2);
    }
}
