use std::collections::BTreeMap;

use crate::runtime::{InputHandle, OutputHandle, Pact, Stream};
use crate::tokens::{TimestampToken, TimestampTokenRef};

/// The exclusive end of the tumbling window of `width` containing `t`.
///
/// Windows are `[k*width, (k+1)*width)`, so a time on a boundary belongs to
/// the window that starts there. Saturates at `u64::MAX`.
pub fn window_end(t: u64, width: u64) -> u64 {
    assert!(width > 0, "window width must be positive");
    (t / width * width).saturating_add(width)
}

/// The single lower bound of a totally ordered frontier; `u64::MAX` once the
/// frontier is empty.
pub fn singleton_frontier(frontier: &[u64]) -> u64 {
    frontier.first().copied().unwrap_or(u64::MAX)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WindowData {
    pub sum: u64,
    pub count: u64,
}

/// Open windows keyed by their end, each holding a token at that end.
pub struct WindowState {
    width: u64,
    windows: BTreeMap<u64, (TimestampToken<u64>, WindowData)>,
}

impl WindowState {
    pub fn new(width: u64) -> Self {
        assert!(width > 0, "window width must be positive");
        WindowState { width, windows: BTreeMap::new() }
    }

    /// Adds a batch received at `token`'s time to its window, retaining a
    /// token for the window if it is new.
    pub fn absorb(&mut self, token: &TimestampTokenRef<'_, u64>, batch: impl IntoIterator<Item = u64>) {
        let end = window_end(*token.time(), self.width);
        let (_, data) = self.windows.entry(end).or_insert_with(|| {
            let mut tok = token.retain();
            tok.downgrade(&end).expect("window end is after the record");
            (tok, WindowData::default())
        });
        for d in batch {
            data.sum = data.sum.wrapping_add(d);
            data.count += 1;
        }
    }

    /// Emits the average of every window ending before `bound`, in
    /// ascending order, then drops those windows and their tokens.
    pub fn retire(&mut self, bound: u64, mut emit: impl FnMut(&TimestampToken<u64>, f64)) -> usize {
        let open = self.windows.split_off(&bound);
        let closed = std::mem::replace(&mut self.windows, open);
        for (tok, data) in closed.values() {
            emit(tok, data.sum as f64 / data.count as f64);
        }
        closed.len()
    }

    /// `(window end, token time, data)` for every open window.
    pub fn open_windows(&self) -> Vec<(u64, u64, WindowData)> {
        self.windows.iter().map(|(end, (tok, data))| (*end, *tok.time(), *data)).collect()
    }
}

/// Averages `u64` records per tumbling window of `width`, emitting each
/// average at the window's end once the input frontier passes it.
///
/// Records are exchanged by value, so with several workers each window may
/// produce one average per worker that received records for it.
pub fn tumbling_average(stream: &Stream<u64, u64>, width: u64) -> Stream<u64, f64> {
    stream.unary_frontier(Pact::exchange(|x: &u64| *x), "TumblingAverage", move |token, _info| {
        assert_eq!(*token.time(), 0);
        drop(token);
        let mut state = WindowState::new(width);
        move |input: &mut InputHandle<u64, u64>, output: &mut OutputHandle<u64, f64>| {
            input.for_each(|tok, batch| state.absorb(&tok, batch.drain(..)));
            let bound = singleton_frontier(input.frontier());
            state.retire(bound, |tok, avg| output.session(tok).give(avg));
        }
    })
}
