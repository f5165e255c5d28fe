use std::cell::Cell;
use std::collections::BTreeMap;
use std::rc::Rc;

use tokenflow::idioms::{unary_notify, watermark_forward, DrainMode, OutputBudget};
use tokenflow::operators::noop_forward;
use tokenflow::progress::brute_force_frontier;
use tokenflow::runtime::{Cluster, Config, InputHandle, OutputHandle, Pact, Worker};

fn assert_matches_oracle(worker: &Worker<u64>) {
    let tracker = worker.tracker().unwrap();
    let live: BTreeMap<_, _> = tracker.live_pointstamps().into_iter().collect();
    let expected = brute_force_frontier(tracker.topology(), &live);
    for (location, frontier) in expected {
        assert_eq!(tracker.frontier(location), &frontier[..], "at {location:?}");
    }
}

#[test]
fn budget_spreads_output_over_invocations() {
    let node = Rc::new(Cell::new(usize::MAX));
    let mut cluster = Cluster::<u64>::new(Config::new(1));
    let node2 = node.clone();
    let mut built = cluster
        .dataflow(move |scope| {
            let (input, stream) = scope.new_input::<u64>();
            let node = node2.clone();
            let out = stream.unary(Pact::Pipeline, "Budgeted", move |token, info| {
                drop(token);
                node.set(info.node);
                let activator = info.activator();
                let mut budget = OutputBudget::new(100);
                move |input: &mut InputHandle<u64, u64>, output: &mut OutputHandle<u64, u64>| {
                    input.for_each(|tok, data| budget.push(tok.retain(), data.drain(..)));
                    budget.emit(output, &activator);
                }
            });
            (input, out.capture(), out.probe())
        })
        .unwrap();
    let (mut input, captured, probe) = built.pop().unwrap();
    input.send_batch(0..1000);
    input.advance_to(5).unwrap();

    let mut seen = Vec::new();
    while cluster.step().unwrap() {
        assert_matches_oracle(cluster.worker(0));
        let emitted = captured.borrow().len();
        seen.push(emitted);
        if emitted < 1000 {
            assert_eq!(probe.frontier(), vec![0]);
        }
    }
    assert_eq!(captured.borrow().len(), 1000);
    assert_eq!(probe.frontier(), vec![5]);
    assert_eq!(cluster.worker(0).stats().node_invocations[node.get()], 10);
    assert!(seen.windows(2).all(|w| w[1] - w[0] <= 100));

    drop(input);
    cluster.run_until_quiescent().unwrap();
}

#[test]
fn notificator_sums_per_time_and_sleeps_when_idle() {
    let node = Rc::new(Cell::new(usize::MAX));
    let mut cluster = Cluster::<u64>::new(Config::new(1));
    let node2 = node.clone();
    let mut built = cluster
        .dataflow(move |scope| {
            let (input, stream) = scope.new_input::<u64>();
            let node = node2.clone();
            let sums = unary_notify(&stream, Pact::Pipeline, "Sums", DrainMode::OnePerDrain, move |token, info| {
                drop(token);
                node.set(info.node);
                let mut sums: BTreeMap<u64, u64> = BTreeMap::new();
                move |input: &mut InputHandle<u64, u64>, output: &mut OutputHandle<u64, u64>, notificator| {
                    input.for_each(|tok, data| {
                        *sums.entry(*tok.time()).or_default() += data.iter().sum::<u64>();
                        notificator.request(&tok);
                    });
                    notificator.drain(input.frontier(), |tok| {
                        let sum = sums.remove(tok.time()).unwrap();
                        output.session(&tok).give(sum);
                    });
                }
            });
            (input, sums.capture())
        })
        .unwrap();
    let (mut input, captured) = built.pop().unwrap();
    for t in 0..50 {
        input.advance_to(t).unwrap();
        while cluster.step().unwrap() {}
    }
    assert_eq!(cluster.worker(0).stats().node_invocations[node.get()], 0);

    let mut expected = BTreeMap::new();
    for t in 50..60u64 {
        input.advance_to(t).unwrap();
        for x in 0..t % 4 {
            input.send(x + t);
            *expected.entry(t).or_insert(0) += x + t;
        }
    }
    drop(input);
    cluster.run_until_quiescent().unwrap();
    assert_eq!(*captured.borrow(), expected.into_iter().collect::<Vec<_>>());
}

#[test]
fn watermark_stages_run_on_every_tick() {
    let mut cluster = Cluster::<u64>::new(Config::new(2));
    let built = cluster
        .dataflow(|scope| {
            let (input, stream) = scope.new_input::<u64>();
            let mut marks = stream.clone();
            let mut plain = stream;
            for i in 0..4 {
                marks = watermark_forward(&marks, Pact::exchange(|x: &u64| *x), &format!("Mark{i}"));
                plain = noop_forward(&plain, Pact::exchange(|x: &u64| *x), &format!("Noop{i}"));
            }
            (input, marks.probe(), plain.probe())
        })
        .unwrap();
    let mut inputs = Vec::new();
    let mut probes = Vec::new();
    for (input, marks, plain) in built {
        inputs.push(input);
        probes.push((marks, plain));
    }
    let before: u64 = cluster.workers().iter().map(|w| w.stats().invocations).sum();
    for t in 1..=10 {
        for input in inputs.iter_mut() {
            input.advance_to(t).unwrap();
        }
        while cluster.step().unwrap() {}
        for (marks, plain) in probes.iter() {
            assert_eq!(marks.frontier(), vec![t]);
            assert_eq!(plain.frontier(), vec![t]);
        }
    }
    let after: u64 = cluster.workers().iter().map(|w| w.stats().invocations).sum();
    // Every watermark stage on every worker, plus each input's flush, per tick.
    assert!(after - before >= 10 * (4 * 2 + 2));
    drop(inputs);
    cluster.run_until_quiescent().unwrap();
}
