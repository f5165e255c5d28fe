/// A collection of signed count updates, compacted lazily.
///
/// Updates are appended to a list and consolidated on demand: equal keys are
/// summed and keys whose counts cancel are removed. This is the only currency
/// exchanged between tokens, operators, workers and frontier trackers.
#[derive(Clone, Debug)]
pub struct ChangeBatch<K> {
    updates: Vec<(K, i64)>,
    // Length of the prefix of `updates` known to be compact.
    clean: usize,
}

impl<K: Ord> ChangeBatch<K> {
    pub fn new() -> Self {
        ChangeBatch { updates: Vec::new(), clean: 0 }
    }

    pub fn new_from(key: K, delta: i64) -> Self {
        let mut batch = Self::new();
        batch.update(key, delta);
        batch
    }

    #[inline]
    pub fn update(&mut self, key: K, delta: i64) {
        if delta != 0 {
            self.updates.push((key, delta));
            self.maintain_bounds();
        }
    }

    pub fn extend<I: IntoIterator<Item = (K, i64)>>(&mut self, iter: I) {
        self.updates.extend(iter.into_iter().filter(|(_, d)| *d != 0));
        self.maintain_bounds();
    }

    /// Moves every update of `self` into `other`, leaving `self` empty.
    pub fn drain_into(&mut self, other: &mut ChangeBatch<K>) {
        if other.updates.is_empty() {
            std::mem::swap(self, other);
        } else {
            other.extend(self.updates.drain(..));
            self.clean = 0;
        }
    }

    /// True iff every key accumulates to zero.
    pub fn is_empty(&mut self) -> bool {
        if self.clean > self.updates.len() / 2 {
            return false;
        }
        self.compact();
        self.updates.is_empty()
    }

    /// Cheap check that may report `false` for batches that would cancel out.
    pub fn is_trivially_empty(&self) -> bool {
        self.updates.is_empty()
    }

    pub fn len(&mut self) -> usize {
        self.compact();
        self.updates.len()
    }

    pub fn clear(&mut self) {
        self.updates.clear();
        self.clean = 0;
    }

    /// Compacted updates, sorted by key.
    pub fn iter(&mut self) -> std::slice::Iter<'_, (K, i64)> {
        self.compact();
        self.updates.iter()
    }

    pub fn drain(&mut self) -> std::vec::Drain<'_, (K, i64)> {
        self.compact();
        self.clean = 0;
        self.updates.drain(..)
    }

    pub fn into_inner(mut self) -> Vec<(K, i64)> {
        self.compact();
        self.updates
    }

    /// The accumulated count for `key`.
    pub fn count(&mut self, key: &K) -> i64 {
        self.compact();
        match self.updates.binary_search_by(|(k, _)| k.cmp(key)) {
            Ok(index) => self.updates[index].1,
            Err(_) => 0,
        }
    }

    /// Sorts, consolidates, and drops zero entries.
    pub fn compact(&mut self) {
        if self.clean < self.updates.len() && self.updates.len() > 1 {
            self.updates.sort_by(|x, y| x.0.cmp(&y.0));
            for i in 0..self.updates.len() - 1 {
                if self.updates[i].0 == self.updates[i + 1].0 {
                    self.updates[i + 1].1 += self.updates[i].1;
                    self.updates[i].1 = 0;
                }
            }
            self.updates.retain(|x| x.1 != 0);
        }
        self.clean = self.updates.len();
    }

    fn maintain_bounds(&mut self) {
        if self.updates.len() > 32 && self.updates.len() >> 1 >= self.clean {
            self.compact();
        }
    }
}

impl<K: Ord> Default for ChangeBatch<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K: Ord + Clone> PartialEq for ChangeBatch<K> {
    fn eq(&self, other: &Self) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.compact();
        b.compact();
        a.updates == b.updates
    }
}

impl<K: Ord + Clone> Eq for ChangeBatch<K> {}

impl<K: Ord> FromIterator<(K, i64)> for ChangeBatch<K> {
    fn from_iter<I: IntoIterator<Item = (K, i64)>>(iter: I) -> Self {
        let mut batch = ChangeBatch::new();
        batch.extend(iter);
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    #[test]
    fn cancelling_updates_vanish() {
        let mut batch = ChangeBatch::new_from(17, 1);
        batch.update(17, -1);
        assert!(batch.is_empty());
        assert_eq!(batch.len(), 0);
    }

    #[test]
    fn drain_leaves_empty() {
        let mut batch: ChangeBatch<u64> = [(3, 1), (5, 2), (3, 4)].into_iter().collect();
        let drained: Vec<_> = batch.drain().collect();
        assert_eq!(drained, vec![(3, 5), (5, 2)]);
        assert!(batch.is_empty());
        assert_eq!(batch.drain().count(), 0);
    }

    proptest! {
        #[test]
        fn compaction_matches_pointwise_sum(
            a in proptest::collection::vec((0u8..8, -3i64..4), 0..60),
            b in proptest::collection::vec((0u8..8, -3i64..4), 0..60),
        ) {
            let mut expected: BTreeMap<u8, i64> = BTreeMap::new();
            for (k, d) in a.iter().chain(b.iter()) {
                *expected.entry(*k).or_default() += d;
            }
            expected.retain(|_, d| *d != 0);

            let mut left: ChangeBatch<u8> = a.into_iter().collect();
            let mut right: ChangeBatch<u8> = b.into_iter().collect();
            right.drain_into(&mut left);
            prop_assert!(right.is_empty());
            let merged: Vec<_> = left.iter().cloned().collect();
            prop_assert!(merged.iter().all(|(_, d)| *d != 0));
            prop_assert_eq!(merged, expected.into_iter().collect::<Vec<_>>());
        }
    }
}
