use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use tokenflow::progress::{
    brute_force_frontier, ChangeBatch, DataflowTopology, FrontierTracker, Location, Pointstamp, PortRef, Product,
    TopologyBuilder,
};
use tokenflow::tokens::{OutputLink, TimestampToken, TimestampTokenRef, TokenBookkeeping};

fn small_summary(rng: &mut StdRng) -> Product {
    Product::new(rng.gen_range(0..2), rng.gen_range(0..2))
}

/// Random graph over pair times; edges may point backwards, so cycles are
/// common. Graphs with a cycle that does not advance are rejected and
/// redrawn.
fn random_topology(rng: &mut StdRng) -> DataflowTopology<Product> {
    loop {
        let mut builder = TopologyBuilder::<Product>::new();
        let nodes = rng.gen_range(1..6);
        let mut shapes = Vec::new();
        for n in 0..nodes {
            let inputs = rng.gen_range(0..3);
            let outputs = rng.gen_range(0..3);
            let internal = (0..inputs)
                .map(|_| (0..outputs).map(|_| rng.gen_bool(0.8).then(|| small_summary(rng))).collect())
                .collect();
            builder.add_node_with(&format!("n{n}"), inputs, outputs, internal);
            shapes.push((inputs, outputs));
        }
        let sources: Vec<PortRef> =
            (0..nodes).flat_map(|n| (0..shapes[n].1).map(move |p| PortRef::new(n, p))).collect();
        let targets: Vec<PortRef> =
            (0..nodes).flat_map(|n| (0..shapes[n].0).map(move |p| PortRef::new(n, p))).collect();
        if !sources.is_empty() && !targets.is_empty() {
            for _ in 0..rng.gen_range(0..8) {
                let s = sources[rng.gen_range(0..sources.len())];
                let t = targets[rng.gen_range(0..targets.len())];
                builder.add_edge_with(s, t, small_summary(rng));
            }
        }
        if let Ok(topology) = builder.build() {
            return topology;
        }
    }
}

fn check_history(seed: u64) {
    let mut rng = StdRng::seed_from_u64(seed);
    let topology = random_topology(&mut rng);
    let locations: Vec<Location> = topology.locations().collect();
    if locations.is_empty() {
        return;
    }
    let mut tracker = FrontierTracker::new(topology.clone());
    let mut live: BTreeMap<Pointstamp<Product>, i64> = BTreeMap::new();
    for _ in 0..rng.gen_range(1..20) {
        let mut batch = ChangeBatch::new();
        for _ in 0..rng.gen_range(1..5) {
            let retire = !live.is_empty() && rng.gen_bool(0.4);
            if retire {
                let key = live.keys().nth(rng.gen_range(0..live.len())).unwrap().clone();
                let count = live.get_mut(&key).unwrap();
                *count -= 1;
                if *count == 0 {
                    live.remove(&key);
                }
                batch.update(key, -1);
            } else {
                let location = locations[rng.gen_range(0..locations.len())];
                let time = Product::new(rng.gen_range(0..4), rng.gen_range(0..4));
                let key = Pointstamp::new(time, location);
                *live.entry(key.clone()).or_insert(0) += 1;
                batch.update(key, 1);
            }
        }
        tracker.apply(&mut batch).unwrap();
        let expected = brute_force_frontier(&topology, &live);
        for location in locations.iter() {
            assert_eq!(tracker.frontier(*location), &expected[location][..], "seed {seed} at {location:?}");
        }
    }
    let mut batch = ChangeBatch::new();
    batch.extend(live.iter().map(|(k, c)| (k.clone(), -c)));
    tracker.apply(&mut batch).unwrap();
    assert!(tracker.is_empty());
    assert!(locations.iter().all(|l| tracker.frontier(*l).is_empty()));
}

/// Random token operations; the drained deltas, replayed, must equal the
/// multiset of live token times at every point.
fn check_tokens(seed: u64) {
    let mut rng = StdRng::seed_from_u64(seed);
    let bk = TokenBookkeeping::<u64>::new(PortRef::new(0, 0));
    let links = [OutputLink { bookkeeping: bk.clone(), summary: Some(rng.gen_range(0..3)) }];
    let mut tokens: Vec<TimestampToken<u64>> = Vec::new();
    let mut replay: BTreeMap<u64, i64> = BTreeMap::new();
    for _ in 0..rng.gen_range(1..60) {
        match rng.gen_range(0..5) {
            0 => tokens.push(bk.mint(rng.gen_range(0..20))),
            1 if !tokens.is_empty() => {
                let i = rng.gen_range(0..tokens.len());
                tokens.push(tokens[i].clone());
            }
            2 if !tokens.is_empty() => {
                let i = rng.gen_range(0..tokens.len());
                let to = tokens[i].time() + rng.gen_range(0..5);
                tokens[i].downgrade(&to).unwrap();
                if to > 0 {
                    assert!(tokens[i].downgrade(&(to - 1)).is_err());
                }
            }
            3 if !tokens.is_empty() => {
                let i = rng.gen_range(0..tokens.len());
                tokens.swap_remove(i);
            }
            _ => {
                let time = rng.gen_range(0..20);
                tokens.push(TimestampTokenRef::new(&time, &links).retain());
            }
        }
        if rng.gen_bool(0.5) {
            for (time, delta) in bk.drain().into_inner() {
                *replay.entry(time).or_insert(0) += delta;
            }
            replay.retain(|_, c| *c != 0);
            let mut live: BTreeMap<u64, i64> = BTreeMap::new();
            for token in tokens.iter() {
                *live.entry(*token.time()).or_insert(0) += 1;
            }
            assert_eq!(replay, live, "seed {seed}");
        }
    }
    tokens.clear();
    for (time, delta) in bk.drain().into_inner() {
        *replay.entry(time).or_insert(0) += delta;
    }
    replay.retain(|_, c| *c != 0);
    assert!(replay.is_empty(), "seed {seed}: {replay:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn tracker_matches_oracle(seed in any::<u64>()) {
        check_history(seed);
    }

    #[test]
    fn token_deltas_replay_to_live_tokens(seed in any::<u64>()) {
        check_tokens(seed);
    }
}
