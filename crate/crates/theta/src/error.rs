use std::io;
use std::path::PathBuf;

use theta_core::cis::CisError;
use theta_core::cluster::ClusterError;
use theta_core::stream::StreamError;
use theta_core::theta::BrokerError;
use theta_core::theta::ChainError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: line {line}: {reason}")]
    Record {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("http: {0}")]
    Http(String),
    #[error(transparent)]
    Cis(#[from] CisError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
