use super::antichain::MutableAntichain;
use super::change_batch::ChangeBatch;
use super::timestamp::{PathSummary, Timestamp};
use super::topology::{compute_location_summaries, DataflowTopology, Location, LocationSummaries, Pointstamp};
use super::ProgressError;

/// Frontier changes produced by one [`FrontierTracker::apply`], compacted:
/// `(location, time, +1 | -1)`.
pub type FrontierChanges<T> = Vec<(Location, T, i64)>;

/// Turns live pointstamp counts into per-location frontiers.
///
/// Each location keeps two counted antichains. `pointstamps` holds the live
/// counts recorded at that location. `implications` holds, for every source
/// location that reaches it, the source's pointstamp frontier advanced by each
/// minimal path summary; its minimal elements are the location's frontier.
/// Only changes to a source's pointstamp frontier are pushed downstream.
///
/// A tracker belongs to a single worker and is never shared.
pub struct FrontierTracker<T: Timestamp> {
    topology: DataflowTopology<T>,
    summaries: LocationSummaries<T::Summary>,
    pointstamps: Vec<MutableAntichain<T>>,
    implications: Vec<MutableAntichain<T>>,
    live: i64,
    scratch: Vec<(T, i64)>,
}

impl<T: Timestamp> FrontierTracker<T> {
    pub fn new(topology: DataflowTopology<T>) -> Self {
        let summaries = compute_location_summaries(&topology);
        let count = topology.location_count();
        FrontierTracker {
            topology,
            summaries,
            pointstamps: vec![MutableAntichain::new(); count],
            implications: vec![MutableAntichain::new(); count],
            live: 0,
            scratch: Vec::new(),
        }
    }

    pub fn topology(&self) -> &DataflowTopology<T> {
        &self.topology
    }

    /// Applies a batch of pointstamp deltas and returns the resulting frontier
    /// changes at every location.
    ///
    /// A delta that drives a count negative is a protocol violation; the
    /// tracker's state is unspecified after such an error.
    pub fn apply(
        &mut self,
        batch: &mut ChangeBatch<Pointstamp<T>>,
    ) -> Result<FrontierChanges<T>, ProgressError> {
        let mut changes: ChangeBatch<(Location, T)> = ChangeBatch::new();
        self.apply_into(batch, &mut changes)?;
        Ok(changes.into_inner().into_iter().map(|((l, t), d)| (l, t, d)).collect())
    }

    /// As [`apply`](Self::apply), accumulating changes into `changes`.
    pub fn apply_into(
        &mut self,
        batch: &mut ChangeBatch<Pointstamp<T>>,
        changes: &mut ChangeBatch<(Location, T)>,
    ) -> Result<(), ProgressError> {
        let mut frontier_changes = std::mem::take(&mut self.scratch);
        let mut implied = Vec::new();
        for (pointstamp, delta) in batch.drain() {
            if !self.topology.is_valid(pointstamp.location) {
                return Err(ProgressError::UnknownLocation(pointstamp.location));
            }
            let source = self.topology.index_of(pointstamp.location);
            frontier_changes.clear();
            self.pointstamps[source]
                .update_into(pointstamp.time, delta, &mut frontier_changes)
                .map_err(|e| e.at(pointstamp.location))?;
            self.live += delta;
            for (time, diff) in frontier_changes.drain(..) {
                for (target, antichain) in self.summaries.from_index(source) {
                    for summary in antichain.elements() {
                        implied.clear();
                        let result = summary.results_in(&time);
                        self.implications[*target].update_into(result, diff, &mut implied)?;
                        let location = self.topology.location_at(*target);
                        for (t, d) in implied.drain(..) {
                            changes.update((location, t), d);
                        }
                    }
                }
            }
        }
        self.scratch = frontier_changes;
        Ok(())
    }

    /// Minimal times that may still appear at `location`, ascending.
    pub fn frontier(&self, location: Location) -> &[T] {
        self.implications[self.topology.index_of(location)].frontier()
    }

    /// True if `time` is still possible at `location`.
    pub fn frontier_leq(&self, location: Location, time: &T) -> bool {
        self.implications[self.topology.index_of(location)].less_equal(time)
    }

    /// Live count for one pointstamp.
    pub fn count(&self, pointstamp: &Pointstamp<T>) -> i64 {
        self.pointstamps[self.topology.index_of(pointstamp.location)].count_for(&pointstamp.time)
    }

    /// Every pointstamp with a positive count.
    pub fn live_pointstamps(&self) -> Vec<(Pointstamp<T>, i64)> {
        let mut result = Vec::new();
        for (index, antichain) in self.pointstamps.iter().enumerate() {
            let location = self.topology.location_at(index);
            for (time, count) in antichain.counts() {
                result.push((Pointstamp::new(time.clone(), location), count));
            }
        }
        result
    }

    /// True when no pointstamp is live, so every frontier is empty.
    pub fn is_empty(&self) -> bool {
        self.live == 0
    }
}
