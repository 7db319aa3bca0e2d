use alloc::string::String;

use super::{DatasetId, StageId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("a dataset needs at least one partition")]
    ZeroPartitions,
    #[error("dataset {0:?} has elements that are not key/value pairs")]
    NotKeyed(DatasetId),
    #[error("dataset {0:?} has a key that cannot be hashed")]
    UnhashableKey(DatasetId),
    #[error("partition {index} out of range for dataset with {partitions} partitions")]
    IndexOutOfRange { index: usize, partitions: usize },
    #[error("unknown dataset {0:?}")]
    UnknownDataset(DatasetId),
    #[error("task {partition} of stage {stage:?} failed after {attempts} attempts")]
    TaskFailed {
        stage: StageId,
        partition: usize,
        attempts: u32,
    },
    #[error("accumulator values can only be read on the driver")]
    WorkerReadForbidden,
    #[error("unknown accumulator {0}")]
    UnknownAccumulator(u64),
    #[error("no compute slots are available")]
    NoWorkers,
    #[error("shuffle output for {0:?} is missing")]
    ShuffleMissing(DatasetId),
    #[error("{0}")]
    User(String),
}
