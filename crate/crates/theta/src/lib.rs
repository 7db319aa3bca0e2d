//! Host side of the stack: files, HTTP stubs, threads, experiments.

pub use theta_core as core;

pub mod data;
pub mod demo;
pub mod error;
pub mod executor;
pub mod filestore;
pub mod harness;
pub mod http;
pub mod oneshot;
pub mod storage;

pub use error::{Error, Result};
