use crate::progress::TotalOrder;
use crate::runtime::{Data, InputHandle, OutputHandle, Pact, Stream};
use crate::tokens::TimestampToken;

/// An output watermark held as a token and advanced to follow the input.
///
/// The token's time never exceeds the input watermark (the least element of
/// the input frontier) and never decreases. When the input frontier empties
/// the token is discarded.
pub struct WatermarkStage<T: TotalOrder> {
    token: Option<TimestampToken<T>>,
}

impl<T: TotalOrder> WatermarkStage<T> {
    pub fn new(token: TimestampToken<T>) -> Self {
        WatermarkStage { token: Some(token) }
    }

    pub fn watermark(&self) -> Option<&T> {
        self.token.as_ref().map(|t| t.time())
    }

    pub fn token(&self) -> Option<&TimestampToken<T>> {
        self.token.as_ref()
    }

    /// Moves the output watermark up to the input watermark. Returns whether
    /// anything changed.
    pub fn forward(&mut self, frontier: &[T]) -> bool {
        match (frontier.first(), self.token.as_mut()) {
            (None, Some(_)) => {
                self.token = None;
                true
            }
            (Some(watermark), Some(token)) if token.time() < watermark => {
                token.downgrade(watermark).expect("watermarks only advance");
                true
            }
            _ => false,
        }
    }
}

/// A forwarding stage in the watermark style: records pass through on
/// arrival, and every input frontier change invokes the stage so that it can
/// advance its own watermark token.
pub fn watermark_forward<T: TotalOrder, D: Data>(stream: &Stream<T, D>, pact: Pact<D>, name: &str) -> Stream<T, D> {
    stream.unary_frontier(pact, name, |token, _info| {
        let mut stage = WatermarkStage::new(token);
        move |input: &mut InputHandle<T, D>, output: &mut OutputHandle<T, D>| {
            input.for_each(|tok, data| output.session(&tok).give_vec(data));
            stage.forward(input.frontier());
        }
    })
}
