//! Open-loop latency benchmarks comparing timestamp tokens with
//! notification and watermark coordination.

pub mod counters;
pub mod dataflows;
pub mod driver;
pub mod histogram;
pub mod quantum;
pub mod row;

pub use dataflows::{build, Experiment};
pub use driver::{calibrate, run, RunConfig, RunResult};
pub use histogram::LatencyHistogram;
pub use quantum::QuantumConfig;
pub use row::{emit_tsv, parse_tsv, Arm, ExperimentRow};
