//! Other coordination styles, written as ordinary operator code on top of
//! tokens: notifications, watermarks and budgeted output.

mod budget;
mod notificator;
mod watermark;

pub use budget::OutputBudget;
pub use notificator::{unary_notify, DrainMode, Notificator};
pub use watermark::{watermark_forward, WatermarkStage};
