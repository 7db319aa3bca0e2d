use alloc::boxed::Box;
use alloc::vec::Vec;

use super::exec::TaskResult;

/// A unit of work handed to an [`Executor`].
pub type Job<'a> = Box<dyn FnOnce() -> TaskResult + Send + 'a>;

/// Runs the tasks of one stage. Implementations may run jobs in parallel but
/// must return results in job order.
pub trait Executor: Send + Sync {
    fn run_all<'a>(&self, jobs: Vec<Job<'a>>) -> Vec<TaskResult>;
}

/// Runs every job on the calling thread, in order.
#[derive(Debug, Default, Clone, Copy)]
pub struct InlineExecutor;

impl Executor for InlineExecutor {
    fn run_all<'a>(&self, jobs: Vec<Job<'a>>) -> Vec<TaskResult> {
        jobs.into_iter().map(|job| job()).collect()
    }
}
