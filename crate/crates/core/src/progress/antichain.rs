use std::collections::BTreeMap;

use super::timestamp::PartialOrder;
use super::ProgressError;

/// A set of mutually incomparable elements.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Antichain<T> {
    elements: Vec<T>,
}

impl<T: PartialOrder> Antichain<T> {
    pub fn new() -> Self {
        Antichain { elements: Vec::new() }
    }

    pub fn from_elem(element: T) -> Self {
        Antichain { elements: vec![element] }
    }

    /// Inserts `element` unless something already present is `less_equal` to
    /// it; evicts anything it dominates. Returns whether it was inserted.
    pub fn insert(&mut self, element: T) -> bool {
        if self.elements.iter().any(|x| x.less_equal(&element)) {
            false
        } else {
            self.elements.retain(|x| !element.less_equal(x));
            self.elements.push(element);
            true
        }
    }

    pub fn elements(&self) -> &[T] {
        &self.elements
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    /// True if some element is `less_equal` to `time`.
    pub fn less_equal(&self, time: &T) -> bool {
        self.elements.iter().any(|x| x.less_equal(time))
    }

    pub fn less_than(&self, time: &T) -> bool {
        self.elements.iter().any(|x| x.less_than(time))
    }

    pub fn into_sorted_vec(mut self) -> Vec<T>
    where
        T: Ord,
    {
        self.elements.sort();
        self.elements
    }
}

impl<T: PartialOrder> Default for Antichain<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: PartialOrder> FromIterator<T> for Antichain<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut result = Antichain::new();
        for element in iter {
            result.insert(element);
        }
        result
    }
}

/// A counted multiset of times that maintains its minimal elements.
///
/// Counts may never become negative; an update that would drive a count
/// below zero is rejected with [`ProgressError::Underflow`] and leaves the
/// antichain untouched.
#[derive(Clone, Debug)]
pub struct MutableAntichain<T> {
    counts: BTreeMap<T, i64>,
    // Sorted by `Ord`.
    frontier: Vec<T>,
}

impl<T: PartialOrder + Ord + Clone + std::fmt::Debug> MutableAntichain<T> {
    pub fn new() -> Self {
        MutableAntichain { counts: BTreeMap::new(), frontier: Vec::new() }
    }

    /// An antichain holding one count of `bottom`.
    pub fn new_bottom(bottom: T) -> Self {
        let mut result = Self::new();
        result.counts.insert(bottom.clone(), 1);
        result.frontier.push(bottom);
        result
    }

    /// The minimal elements with positive count, in ascending `Ord` order.
    pub fn frontier(&self) -> &[T] {
        &self.frontier
    }

    pub fn is_empty(&self) -> bool {
        self.frontier.is_empty()
    }

    /// True if some frontier element is `less_equal` to `time`, i.e. `time`
    /// may still appear.
    pub fn less_equal(&self, time: &T) -> bool {
        if T::IS_TOTAL {
            self.frontier.first().map_or(false, |f| f.less_equal(time))
        } else {
            self.frontier.iter().any(|f| f.less_equal(time))
        }
    }

    pub fn less_than(&self, time: &T) -> bool {
        self.frontier.iter().any(|f| f.less_than(time))
    }

    pub fn count_for(&self, time: &T) -> i64 {
        self.counts.get(time).copied().unwrap_or(0)
    }

    /// Elements with positive count, in ascending order.
    pub fn counts(&self) -> impl Iterator<Item = (&T, i64)> {
        self.counts.iter().map(|(t, c)| (t, *c))
    }

    /// Applies `delta` to the count of `time` and returns the frontier
    /// changes, removals (`-1`) before additions (`+1`).
    pub fn update(&mut self, time: T, delta: i64) -> Result<Vec<(T, i64)>, ProgressError> {
        let mut changes = Vec::new();
        self.update_into(time, delta, &mut changes)?;
        Ok(changes)
    }

    /// As [`update`](Self::update), appending changes to `changes`.
    pub fn update_into(
        &mut self,
        time: T,
        delta: i64,
        changes: &mut Vec<(T, i64)>,
    ) -> Result<(), ProgressError> {
        if delta == 0 {
            return Ok(());
        }
        let old = self.count_for(&time);
        let new = old + delta;
        if new < 0 {
            return Err(ProgressError::Underflow { time: format!("{time:?}"), count: new, location: None });
        }
        if new == 0 {
            self.counts.remove(&time);
        } else {
            self.counts.insert(time.clone(), new);
        }

        if old == 0 {
            self.appeared(time, changes);
        } else if new == 0 {
            self.vanished(time, changes);
        }
        Ok(())
    }

    fn appeared(&mut self, time: T, changes: &mut Vec<(T, i64)>) {
        if self.less_equal(&time) {
            return;
        }
        self.frontier.retain(|f| {
            let dominated = time.less_equal(f);
            if dominated {
                changes.push((f.clone(), -1));
            }
            !dominated
        });
        let position = self.frontier.binary_search(&time).unwrap_or_else(|p| p);
        self.frontier.insert(position, time.clone());
        changes.push((time, 1));
    }

    fn vanished(&mut self, time: T, changes: &mut Vec<(T, i64)>) {
        let Ok(position) = self.frontier.binary_search(&time) else {
            return;
        };
        self.frontier.remove(position);
        changes.push((time.clone(), -1));

        if T::IS_TOTAL {
            if let Some((next, _)) = self.counts.iter().next() {
                self.frontier.push(next.clone());
                changes.push((next.clone(), 1));
            }
            return;
        }

        // Only elements above `time` in the linear extension can have been
        // dominated solely by `time`. Scan them in order so that anything
        // promoted is checked against promotions made before it.
        let mut promoted = Vec::new();
        for (candidate, _) in self.counts.range((std::ops::Bound::Excluded(&time), std::ops::Bound::Unbounded)) {
            if time.less_equal(candidate)
                && !self.frontier.iter().any(|f| f.less_equal(candidate))
                && !promoted.iter().any(|p: &T| p.less_equal(candidate))
            {
                promoted.push(candidate.clone());
            }
        }
        for element in promoted {
            let position = self.frontier.binary_search(&element).unwrap_or_else(|p| p);
            self.frontier.insert(position, element.clone());
            changes.push((element, 1));
        }
    }
}

impl<T: PartialOrder + Ord + Clone + std::fmt::Debug> Default for MutableAntichain<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::progress::Product;
    use proptest::prelude::*;

    fn minimal_set<T: PartialOrder + Ord + Clone>(items: &[T]) -> Vec<T> {
        let mut result: Vec<T> = items
            .iter()
            .filter(|x| !items.iter().any(|y| y.less_than(x)))
            .cloned()
            .collect();
        result.sort();
        result.dedup();
        result
    }

    #[test]
    fn first_element_enters_frontier() {
        let mut a = MutableAntichain::new();
        assert_eq!(a.update(3u64, 1).unwrap(), vec![(3, 1)]);
        assert_eq!(a.frontier(), &[3]);
    }

    #[test]
    fn dominated_element_changes_nothing() {
        let mut a = MutableAntichain::new_bottom(3u64);
        assert!(a.update(5, 1).unwrap().is_empty());
        assert_eq!(a.frontier(), &[3]);
    }

    #[test]
    fn removing_minimum_promotes_next() {
        let mut a = MutableAntichain::new_bottom(3u64);
        a.update(5, 1).unwrap();
        // brute force: minimal elements of the remaining multiset {5}
        let expected_frontier = minimal_set(&[5u64]);
        let changes = a.update(3, -1).unwrap();
        assert_eq!(changes, vec![(3, -1), (5, 1)]);
        assert_eq!(a.frontier(), expected_frontier.as_slice());
    }

    #[test]
    fn incomparable_pairs_are_both_minimal() {
        let mut a = MutableAntichain::new();
        a.update(Product::new(0, 1), 1).unwrap();
        a.update(Product::new(1, 0), 1).unwrap();
        assert_eq!(a.frontier(), &[Product::new(0, 1), Product::new(1, 0)]);
    }

    #[test]
    fn underflow_is_rejected_without_mutation() {
        let mut a = MutableAntichain::new_bottom(4u64);
        assert!(matches!(a.update(7, -1), Err(ProgressError::Underflow { .. })));
        assert!(a.update(4, -2).is_err());
        assert_eq!(a.frontier(), &[4]);
        assert_eq!(a.count_for(&4), 1);
    }

    fn check_against_brute_force<T>(ops: Vec<(T, i64)>)
    where
        T: PartialOrder + Ord + Clone + std::fmt::Debug,
    {
        let mut antichain = MutableAntichain::new();
        let mut counts: BTreeMap<T, i64> = BTreeMap::new();
        for (time, delta) in ops {
            let current = counts.get(&time).copied().unwrap_or(0);
            let delta = if current + delta < 0 { -current } else { delta };
            let old_frontier = antichain.frontier().to_vec();
            let changes = antichain.update(time.clone(), delta).unwrap();
            *counts.entry(time).or_default() += delta;
            counts.retain(|_, c| *c != 0);

            let live: Vec<T> = counts.keys().cloned().collect();
            let expected = minimal_set(&live);
            assert_eq!(antichain.frontier(), expected.as_slice());

            // replaying the reported changes onto the old frontier yields the new one
            let mut replay: BTreeMap<T, i64> = old_frontier.into_iter().map(|t| (t, 1)).collect();
            for (t, d) in changes {
                *replay.entry(t).or_default() += d;
            }
            replay.retain(|_, c| *c != 0);
            assert!(replay.values().all(|c| *c == 1));
            assert_eq!(replay.into_keys().collect::<Vec<_>>(), expected);

            // antichain laws
            let frontier = antichain.frontier();
            for a in frontier {
                for b in frontier {
                    assert!(a == b || !a.less_equal(b));
                }
            }
            for t in counts.keys() {
                assert!(antichain.less_equal(t));
            }
        }
    }

    proptest! {
        #[test]
        fn total_order_matches_brute_force(ops in proptest::collection::vec((0u64..12, -2i64..3), 0..80)) {
            check_against_brute_force(ops);
        }

        #[test]
        fn product_order_matches_brute_force(
            ops in proptest::collection::vec(((0u64..5, 0u64..5), -2i64..3), 0..80)
        ) {
            check_against_brute_force(
                ops.into_iter().map(|((a, b), d)| (Product::new(a, b), d)).collect(),
            );
        }
    }
}
