//! Push notifications for recommendations read from the broker.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::theta::{Broker, BrokerError};

/// What the recommendation stage publishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationMessage {
    pub batch_id: u64,
    pub vehicleid: String,
    pub station_id: String,
    pub distance_km: f64,
    pub price: f64,
    pub expected_cost: f64,
    pub reason: String,
}

impl RecommendationMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

/// The push message body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub vehicleid: String,
    pub station_id: String,
    pub price: f64,
    pub expected_cost: f64,
}

impl Notification {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("notification serializes")
    }
}

/// Outbound channel, e.g. an HTTP endpoint or a file.
pub trait NotificationSink {
    fn deliver(&mut self, n: &Notification) -> Result<(), String>;
}

/// Collects deliveries in memory; can be switched off to simulate an outage.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub delivered: Vec<Notification>,
    pub down: bool,
    pub attempts: u64,
}

impl NotificationSink for MemorySink {
    fn deliver(&mut self, n: &Notification) -> Result<(), String> {
        self.attempts += 1;
        if self.down {
            return Err("sink unavailable".to_string());
        }
        self.delivered.push(n.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NotifyStats {
    pub delivered: u64,
    pub duplicates: u64,
    pub failed: u64,
    pub malformed: u64,
}

/// Consumes recommendations and delivers each `(batch, vehicle)` once. A
/// message is acknowledged only after delivery, so failed deliveries come
/// back after the visibility timeout.
#[derive(Debug)]
pub struct NotificationService {
    group: String,
    topic: String,
    done: BTreeSet<(u64, String)>,
    stats: NotifyStats,
}

impl NotificationService {
    pub fn new(broker: &mut Broker, group: &str, topic: &str) -> Self {
        broker.subscribe(group, topic);
        NotificationService {
            group: group.to_string(),
            topic: topic.to_string(),
            done: BTreeSet::new(),
            stats: NotifyStats::default(),
        }
    }

    pub fn stats(&self) -> NotifyStats {
        self.stats
    }

    /// Handles everything deliverable at `now`.
    pub fn poll(
        &mut self,
        broker: &mut Broker,
        sink: &mut dyn NotificationSink,
        now: u64,
    ) -> Result<(), BrokerError> {
        while let Some(env) = broker.consume(&self.group, &self.topic, now)? {
            let Ok(msg) = serde_json::from_slice::<RecommendationMessage>(&env.payload) else {
                self.stats.malformed += 1;
                broker.ack(&self.group, &self.topic, env.delivery_id)?;
                continue;
            };
            let key = (msg.batch_id, msg.vehicleid.clone());
            if self.done.contains(&key) {
                self.stats.duplicates += 1;
                broker.ack(&self.group, &self.topic, env.delivery_id)?;
                continue;
            }
            let n = Notification {
                vehicleid: msg.vehicleid,
                station_id: msg.station_id,
                price: msg.price,
                expected_cost: msg.expected_cost,
            };
            match sink.deliver(&n) {
                Ok(()) => {
                    self.stats.delivered += 1;
                    self.done.insert(key);
                    broker.ack(&self.group, &self.topic, env.delivery_id)?;
                }
                Err(_) => self.stats.failed += 1,
            }
        }
        Ok(())
    }
}
