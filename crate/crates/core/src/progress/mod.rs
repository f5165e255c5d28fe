//! Timestamps, locations, antichains and frontier tracking.

mod antichain;
mod change_batch;
pub mod oracle;
mod timestamp;
mod topology;
mod tracker;

pub use antichain::{Antichain, MutableAntichain};
pub use change_batch::ChangeBatch;
pub use oracle::brute_force_frontier;
pub use timestamp::{PartialOrder, PathSummary, Product, Timestamp, TotalOrder};
pub use topology::{
    compute_location_summaries, DataflowTopology, EdgeShape, Location, LocationSummaries, NodeShape,
    Pointstamp, PortRef, TopologyBuilder,
};
pub use tracker::{FrontierChanges, FrontierTracker};

use thiserror::Error;

/// Violations of the progress protocol. These always indicate an engine or
/// operator bug, never a recoverable condition.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgressError {
    #[error("pointstamp count underflow at time {time}{}: count would become {count}", location_suffix(.location))]
    Underflow { time: String, count: i64, location: Option<Location> },
    #[error("update for a location outside the topology: {0}")]
    UnknownLocation(Location),
}

impl ProgressError {
    pub(crate) fn at(self, location: Location) -> Self {
        match self {
            ProgressError::Underflow { time, count, .. } => {
                ProgressError::Underflow { time, count, location: Some(location) }
            }
            other => other,
        }
    }
}

fn location_suffix(location: &Option<Location>) -> String {
    location.map(|l| format!(" ({l})")).unwrap_or_default()
}

/// Rejections raised while validating a dataflow graph.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("edge {edge} references a port that does not exist")]
    PortOutOfRange { edge: usize },
    #[error("node {node} has an internal summary table of the wrong shape")]
    SummaryShape { node: usize },
    #[error("cycle does not advance timestamps: {}", .cycle.join(" -> "))]
    IdentityCycle { cycle: Vec<String> },
}
