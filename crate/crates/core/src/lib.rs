//! A small multi-worker dataflow engine whose coordination layer is built
//! from timestamp tokens.

pub mod progress;
pub mod tokens;
pub mod runtime;
pub mod idioms;
pub mod operators;
