//! Micro-batch streams over engine datasets.

mod app;
mod checkpoint;
mod graph;
mod wal;

use alloc::string::String;

pub use app::{AppCounters, StreamConfig, StreamingApp};
pub use checkpoint::{
    decode_meta, decode_state, encode_meta, encode_state, CheckpointImage, DurableStorage,
    MemoryStorage, OperatorState, StorageError, STATE_MAGIC, STATE_VERSION,
};
pub use graph::{
    DecodeFn, OutputContext, OutputFn, ReceiverSpec, StateSpec, Stream, StreamingContext,
    TransformFn, WindowSpec,
};
pub use wal::{decode_wal, encode_wal_record, wal_header, WalRecord, WAL_MAGIC, WAL_VERSION};

use crate::engine::EngineError;
use crate::theta::BrokerError;

pub const MIN_INTERVAL_MS: u64 = 100;
pub const MAX_INTERVAL_MS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StreamError {
    #[error("batch interval {0} ms outside 100..=10000 ms")]
    IntervalOutOfRange(u64),
    #[error("{slots} slots cannot host {receivers} receivers and a task slot")]
    NoFreeCore { slots: usize, receivers: usize },
    #[error("streams with {left_ms} ms and {right_ms} ms intervals cannot be combined")]
    IntervalMismatch { left_ms: u64, right_ms: u64 },
    #[error("window {length_ms} ms / slide {slide_ms} ms is not a positive multiple of the batch interval")]
    InvalidWindow { length_ms: u64, slide_ms: u64 },
    #[error("checkpoint write failed: {0}")]
    CheckpointWriteFailed(StorageError),
    #[error("write-ahead log append failed: {0}")]
    WalWriteFailed(StorageError),
    #[error("storage: {0}")]
    Storage(StorageError),
    #[error("output of batch {batch_id} failed: {reason}")]
    OutputFailed { batch_id: u64, reason: String },
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error("broker: {0}")]
    Broker(BrokerError),
    #[error("the driver is gone")]
    DriverLost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchStats {
    pub batch_id: u64,
    /// End of the batch's interval.
    pub batch_time_ms: u64,
    pub input_count: u64,
    pub start_ms: u64,
    pub end_ms: u64,
    pub processing_ms: u64,
    /// Time between the end of the interval and the batch start.
    pub scheduling_delay_ms: u64,
    /// Sealed batches still queued when this one started.
    pub waiting_batches: usize,
}
