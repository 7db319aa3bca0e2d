//! Service bootstrap. A service cannot start unless both the messaging and
//! the immutable-store bindings are configured.

use alloc::boxed::Box;
use alloc::string::String;

use super::{BatchSink, Broker, ImmutableStore, Services, ServingView};
use crate::stream::{DurableStorage, MemoryStorage, StreamError, StreamingContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    Messaging,
    ImmutableStore,
}

impl core::fmt::Display for Binding {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Binding::Messaging => "messaging",
            Binding::ImmutableStore => "immutable_store",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error("missing binding: {0}")]
    MissingBinding(Binding),
    #[error(transparent)]
    Stream(#[from] StreamError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceKind {
    /// Plain service, e.g. a notification or ingestion service.
    Plain,
    /// Processing service: also gets a streaming context.
    Processing { batch_interval_ms: u64 },
}

pub struct AppServiceConfig {
    pub name: String,
    pub kind: ServiceKind,
    pub messaging: Option<Broker>,
    pub immutable_store: Option<Box<dyn ImmutableStore>>,
    pub durable: Option<Box<dyn DurableStorage>>,
}

impl AppServiceConfig {
    pub fn new(name: &str, kind: ServiceKind) -> Self {
        AppServiceConfig {
            name: String::from(name),
            kind,
            messaging: None,
            immutable_store: None,
            durable: None,
        }
    }

    pub fn messaging(mut self, broker: Broker) -> Self {
        self.messaging = Some(broker);
        self
    }

    pub fn immutable_store(mut self, store: Box<dyn ImmutableStore>) -> Self {
        self.immutable_store = Some(store);
        self
    }

    pub fn durable(mut self, storage: Box<dyn DurableStorage>) -> Self {
        self.durable = Some(storage);
        self
    }
}

/// What the service body works with.
pub struct ServiceHandle {
    pub name: String,
    pub services: Services,
    pub streaming: Option<StreamingContext>,
}

/// Initializes the bindings and then runs `body`. The body never runs if a
/// binding is missing.
pub fn run_app_service<R>(
    config: AppServiceConfig,
    body: impl FnOnce(&mut ServiceHandle) -> R,
) -> Result<(ServiceHandle, R), ServiceError> {
    let broker = config
        .messaging
        .ok_or(ServiceError::MissingBinding(Binding::Messaging))?;
    let store = config
        .immutable_store
        .ok_or(ServiceError::MissingBinding(Binding::ImmutableStore))?;
    let streaming = match config.kind {
        ServiceKind::Plain => None,
        ServiceKind::Processing { batch_interval_ms } => {
            Some(StreamingContext::new(batch_interval_ms)?)
        }
    };
    let mut handle = ServiceHandle {
        name: config.name,
        services: Services {
            broker,
            store,
            view: ServingView::new(),
            sink: BatchSink::new(),
            durable: config
                .durable
                .unwrap_or_else(|| Box::new(MemoryStorage::new())),
        },
        streaming,
    };
    let r = body(&mut handle);
    Ok((handle, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theta::MemoryStore;

    #[test]
    fn missing_store_stops_before_body() {
        let mut ran = false;
        let cfg = AppServiceConfig::new("notify", ServiceKind::Plain).messaging(Broker::default());
        let err = run_app_service(cfg, |_| ran = true).err();
        assert_eq!(
            err,
            Some(ServiceError::MissingBinding(Binding::ImmutableStore))
        );
        assert!(!ran);
    }

    #[test]
    fn processing_service_gets_streaming_context() {
        let cfg = AppServiceConfig::new(
            "cis",
            ServiceKind::Processing {
                batch_interval_ms: 1000,
            },
        )
        .messaging(Broker::default())
        .immutable_store(Box::new(MemoryStore::new()));
        let (h, interval) =
            run_app_service(cfg, |h| h.streaming.as_ref().map(|c| c.batch_interval_ms())).unwrap();
        assert_eq!(interval, Some(1000));
        assert_eq!(h.name, "cis");
        let plain = AppServiceConfig::new("n", ServiceKind::Plain)
            .messaging(Broker::default())
            .immutable_store(Box::new(MemoryStore::new()));
        let (h, _) = run_app_service(plain, |_| ()).unwrap();
        assert!(h.streaming.is_none());
    }
}
