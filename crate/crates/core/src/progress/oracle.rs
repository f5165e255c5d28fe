//! Reference frontier computation by direct enumeration.
//!
//! Shares nothing with the incremental tracker beyond the topology's
//! one-step moves: no precomputed summaries, no counted antichains.

use std::collections::BTreeMap;

use super::timestamp::{PathSummary, Timestamp};
use super::topology::{DataflowTopology, Location, Pointstamp};

/// For every location, the minimal elements of the times reachable from live
/// pointstamps along any directed path, sorted ascending.
///
/// Only simple paths are walked: a path that revisits a location contains a
/// cycle, cycles strictly advance times, and so the path is dominated by the
/// same path with the cycle removed.
pub fn brute_force_frontier<T: Timestamp>(
    topology: &DataflowTopology<T>,
    live: &BTreeMap<Pointstamp<T>, i64>,
) -> BTreeMap<Location, Vec<T>> {
    let mut reached: BTreeMap<Location, Vec<T>> = topology.locations().map(|l| (l, Vec::new())).collect();
    for (pointstamp, count) in live.iter() {
        if *count > 0 {
            let mut on_path = vec![pointstamp.location];
            walk(topology, pointstamp.location, pointstamp.time.clone(), &mut on_path, &mut reached);
        }
    }
    reached
        .into_iter()
        .map(|(location, times)| {
            let mut minimal: Vec<T> = times
                .iter()
                .filter(|t| !times.iter().any(|u| u.less_than(t)))
                .cloned()
                .collect();
            minimal.sort();
            minimal.dedup();
            (location, minimal)
        })
        .collect()
}

fn walk<T: Timestamp>(
    topology: &DataflowTopology<T>,
    at: Location,
    time: T,
    on_path: &mut Vec<Location>,
    reached: &mut BTreeMap<Location, Vec<T>>,
) {
    reached.get_mut(&at).unwrap().push(time.clone());
    for (next, summary) in topology.steps(at) {
        if !on_path.contains(&next) {
            on_path.push(next);
            walk(topology, next, summary.results_in(&time), on_path, reached);
            on_path.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::progress::{PortRef, TopologyBuilder};

    #[test]
    fn nothing_live_means_empty_frontiers() {
        let mut b = TopologyBuilder::<u64>::new();
        let a = b.add_node("A", 0, 1);
        let c = b.add_node("B", 1, 0);
        b.add_edge(PortRef::new(a, 0), PortRef::new(c, 0));
        let topo = b.build().unwrap();
        let result = brute_force_frontier(&topo, &BTreeMap::new());
        assert!(result.values().all(|f| f.is_empty()));
        assert_eq!(result.len(), topo.location_count());
    }

    #[test]
    fn reachability_and_minimum() {
        // A -> B, and an unrelated C -> D
        let mut b = TopologyBuilder::<u64>::new();
        let a = b.add_node("A", 0, 1);
        let bn = b.add_node("B", 1, 0);
        let c = b.add_node("C", 0, 1);
        let d = b.add_node("D", 1, 0);
        let eb = b.add_edge(PortRef::new(a, 0), PortRef::new(bn, 0));
        let ed = b.add_edge(PortRef::new(c, 0), PortRef::new(d, 0));
        let topo = b.build().unwrap();

        let mut live = BTreeMap::new();
        live.insert(Pointstamp::new(5, Location::Edge(eb)), 1);
        let result = brute_force_frontier(&topo, &live);
        assert_eq!(result[&Location::Node { node: bn, port: 0 }], vec![5]);
        assert!(result[&Location::Node { node: d, port: 0 }].is_empty());
        assert!(result[&Location::Edge(ed)].is_empty());

        live.clear();
        live.insert(Pointstamp::new(3, Location::Edge(eb)), 1);
        live.insert(Pointstamp::new(4, Location::Edge(eb)), 2);
        let result = brute_force_frontier(&topo, &live);
        assert_eq!(result[&Location::Node { node: bn, port: 0 }], vec![3]);
    }
}
