//! Parallel task execution on OS threads.

use std::num::NonZeroUsize;
use std::thread;

use theta_core::engine::{Executor, Job, TaskResult};

/// Runs the jobs of a stage on up to `threads` scoped threads. Results come
/// back in job order.
#[derive(Debug, Clone, Copy)]
pub struct ThreadedExecutor {
    threads: usize,
}

impl ThreadedExecutor {
    pub fn new(threads: usize) -> Self {
        ThreadedExecutor {
            threads: threads.max(1),
        }
    }

    /// One thread per available core.
    pub fn per_core() -> Self {
        ThreadedExecutor::new(thread::available_parallelism().map_or(1, NonZeroUsize::get))
    }

    pub fn threads(&self) -> usize {
        self.threads
    }
}

impl Executor for ThreadedExecutor {
    fn run_all<'a>(&self, jobs: Vec<Job<'a>>) -> Vec<TaskResult> {
        if self.threads == 1 || jobs.len() <= 1 {
            return jobs.into_iter().map(|j| j()).collect();
        }
        let n = jobs.len();
        let mut lanes: Vec<Vec<(usize, Job<'a>)>> =
            (0..self.threads.min(n)).map(|_| Vec::new()).collect();
        let lane_count = lanes.len();
        for (i, job) in jobs.into_iter().enumerate() {
            lanes[i % lane_count].push((i, job));
        }
        let mut out: Vec<Option<TaskResult>> = (0..n).map(|_| None).collect();
        thread::scope(|s| {
            let handles: Vec<_> = lanes
                .into_iter()
                .map(|lane| {
                    s.spawn(move || lane.into_iter().map(|(i, j)| (i, j())).collect::<Vec<_>>())
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("task thread panicked") {
                    out[i] = Some(r);
                }
            }
        });
        out.into_iter().map(|r| r.expect("every job ran")).collect()
    }
}
