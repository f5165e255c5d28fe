use std::collections::BTreeMap;

use tokenflow::idioms::{unary_notify, watermark_forward, DrainMode, WatermarkStage};
use tokenflow::operators::{hash_key, noop_forward, rolling_count, CountState};
use tokenflow::runtime::{ExternalInput, InputHandle, OutputHandle, Pact, ProbeHandle, Scope, Stream};

use crate::row::Arm;

/// Which benchmark dataflow to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    /// One rolling word-count operator.
    Wordcount,
    /// A chain of forwarding stages of the given length.
    Opsequence(usize),
}

/// Name prefix of the forwarding stages in an operator chain.
pub const STAGE_PREFIX: &str = "Stage";
/// Name of the counting operator in every word-count variant.
pub const COUNT_NAME: &str = "Count";

/// Rolling word count, coordinated the way `arm` prescribes. Every variant
/// emits `(word, count)` at the word's time; they differ in when the count
/// happens and how the operator learns that a time is complete.
pub fn wordcount(words: &Stream<u64, u64>, arm: Arm) -> Stream<u64, (u64, u64)> {
    match arm {
        Arm::Tokens => rolling_count(words),
        Arm::Notifications => wordcount_notify(words),
        Arm::WatermarksX | Arm::WatermarksP => wordcount_watermark(words),
    }
}

/// Words are stashed until their time is complete, then counted in time
/// order, one time per invocation.
fn wordcount_notify(words: &Stream<u64, u64>) -> Stream<u64, (u64, u64)> {
    let pact = Pact::exchange(|w: &u64| hash_key(w));
    unary_notify(words, pact, COUNT_NAME, DrainMode::OnePerDrain, |token, _info| {
        drop(token);
        let mut stash: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        let mut counts = CountState::new();
        move |input: &mut InputHandle<u64, u64>, output: &mut OutputHandle<u64, (u64, u64)>, notificator| {
            input.for_each(|tok, data| {
                stash.entry(*tok.time()).or_default().append(data);
                notificator.request(&tok);
            });
            notificator.drain(input.frontier(), |tok| {
                let batch = stash.remove(tok.time()).unwrap_or_default();
                let mut session = output.session(&tok);
                for word in batch {
                    let count = counts.observe(&word);
                    session.give((word, count));
                }
            });
        }
    })
}

/// Words are counted on arrival and sent under the operator's own output
/// watermark, which follows the input watermark on every frontier change.
fn wordcount_watermark(words: &Stream<u64, u64>) -> Stream<u64, (u64, u64)> {
    words.unary_frontier(Pact::exchange(|w: &u64| hash_key(w)), COUNT_NAME, |token, _info| {
        let mut stage = WatermarkStage::new(token);
        let mut counts = CountState::new();
        move |input: &mut InputHandle<u64, u64>, output: &mut OutputHandle<u64, (u64, u64)>| {
            while let Some((tok, data)) = input.next() {
                let token = stage.token().expect("input frontier allows the data");
                let mut session = output.session_at(token, *tok.time()).expect("watermark trails the data");
                for word in data.drain(..) {
                    let count = counts.observe(&word);
                    session.give((word, count));
                }
            }
            stage.forward(input.frontier());
        }
    })
}

/// `length` forwarding stages. Token stages are skipped by the scheduler
/// when idle; watermark stages run on every watermark change, behind an
/// exchange (`WatermarksX`) or worker-local (`WatermarksP`).
pub fn op_chain(stream: &Stream<u64, u64>, arm: Arm, length: usize) -> Stream<u64, u64> {
    let mut stream = stream.clone();
    for i in 0..length {
        let name = format!("{STAGE_PREFIX}{i}");
        stream = match arm {
            Arm::Tokens => noop_forward(&stream, Pact::exchange(|x: &u64| *x), &name),
            Arm::WatermarksX => watermark_forward(&stream, Pact::exchange(|x: &u64| *x), &name),
            Arm::WatermarksP => watermark_forward(&stream, Pact::Pipeline, &name),
            Arm::Notifications => panic!("operator chains have no notifications variant"),
        };
    }
    stream
}

/// Builds `experiment` under `arm` and returns its input and a probe on its
/// output.
pub fn build(scope: &mut Scope<u64>, experiment: Experiment, arm: Arm) -> (ExternalInput<u64, u64>, ProbeHandle<u64>) {
    let (input, stream) = scope.new_input::<u64>();
    let probe = match experiment {
        Experiment::Wordcount => wordcount(&stream, arm).probe(),
        Experiment::Opsequence(length) => op_chain(&stream, arm, length).probe(),
    };
    (input, probe)
}
