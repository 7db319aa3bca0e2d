#![no_std]

//! Micro-batch stream processing on a virtual clock.
//!
//! * [`engine`]: partitioned datasets with lineage, stages, broadcast and
//!   accumulators.
//! * [`stream`]: micro-batch streams, windows, keyed state, receivers, WAL
//!   and checkpoints.
//! * [`cluster`]: simulated masters, workers and driver with fault injection.
//! * [`theta`]: broker, immutable store, serving view and processor chains.
//! * [`cis`]: the gas-station recommendation pipeline.

extern crate alloc;

pub mod cis;
pub mod cluster;
pub mod codec;
pub mod engine;
pub mod stream;
pub mod theta;
pub mod value;

pub use value::Value;
