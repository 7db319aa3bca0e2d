//! In-memory message broker with consumer groups and at-least-once delivery.
//!
//! Every group sees every message published to its topic after the group was
//! declared. Messages published before any group exists are retained and
//! handed to the first group that subscribes, so a consumer that starts late
//! still receives the backlog.
//!
//! A delivered message stays unacknowledged until acked or until its
//! visibility deadline passes, after which it is redelivered with an
//! incremented `redelivery_count`.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::{String, ToString};
use alloc::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    /// Unique per delivery attempt.
    pub delivery_id: u64,
    /// Stable across redeliveries.
    pub message_id: MessageId,
    pub topic: Arc<str>,
    pub payload: Arc<[u8]>,
    pub publish_ts: u64,
    pub redelivery_count: u32,
    /// When this delivery became available: the publish time for a first
    /// delivery, the expiry or nack time for a redelivery.
    pub available_ts: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BrokerError {
    #[error("delivery {0} is unknown or expired")]
    UnknownDelivery(u64),
    #[error("group {group} is not subscribed to {topic}")]
    UnknownGroup { group: String, topic: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroupStats {
    pub published: u64,
    pub acked: u64,
    /// Waiting for a first delivery or a redelivery.
    pub pending: u64,
    pub unacked: u64,
}

#[derive(Debug, Clone)]
struct Message {
    id: MessageId,
    payload: Arc<[u8]>,
    publish_ts: u64,
}

#[derive(Debug, Clone)]
struct Redelivery {
    msg: Arc<Message>,
    count: u32,
    available_ts: u64,
}

#[derive(Debug, Clone)]
struct InFlight {
    msg: Arc<Message>,
    count: u32,
    deadline: u64,
}

#[derive(Debug, Default)]
struct Group {
    pending: VecDeque<Arc<Message>>,
    redeliver: VecDeque<Redelivery>,
    unacked: BTreeMap<u64, InFlight>,
    deadlines: BTreeSet<(u64, u64)>,
    published: u64,
    acked: u64,
}

#[derive(Debug, Default)]
struct Topic {
    name: Arc<str>,
    retained: VecDeque<Arc<Message>>,
    groups: BTreeMap<String, Group>,
}

#[derive(Debug)]
pub struct Broker {
    topics: BTreeMap<String, Topic>,
    next_message: u64,
    next_delivery: u64,
    visibility_ms: u64,
}

impl Default for Broker {
    fn default() -> Self {
        Broker::new(5_000)
    }
}

impl Broker {
    pub fn new(visibility_ms: u64) -> Self {
        Broker {
            topics: BTreeMap::new(),
            next_message: 0,
            next_delivery: 0,
            visibility_ms,
        }
    }

    pub fn visibility_ms(&self) -> u64 {
        self.visibility_ms
    }

    fn topic_mut(&mut self, topic: &str) -> &mut Topic {
        self.topics
            .entry(topic.to_string())
            .or_insert_with(|| Topic {
                name: Arc::from(topic),
                ..Topic::default()
            })
    }

    pub fn publish(&mut self, topic: &str, payload: &[u8], now: u64) -> MessageId {
        let id = MessageId(self.next_message);
        self.next_message += 1;
        let msg = Arc::new(Message {
            id,
            payload: Arc::from(payload),
            publish_ts: now,
        });
        let t = self.topic_mut(topic);
        if t.groups.is_empty() {
            t.retained.push_back(msg);
        } else {
            for g in t.groups.values_mut() {
                g.published += 1;
                g.pending.push_back(msg.clone());
            }
        }
        id
    }

    /// Declares `group` on `topic`. Idempotent.
    pub fn subscribe(&mut self, group: &str, topic: &str) {
        let t = self.topic_mut(topic);
        if t.groups.contains_key(group) {
            return;
        }
        let mut g = Group::default();
        if t.groups.is_empty() {
            g.published = t.retained.len() as u64;
            g.pending = core::mem::take(&mut t.retained);
        }
        t.groups.insert(group.to_string(), g);
    }

    fn group_mut(
        &mut self,
        group: &str,
        topic: &str,
    ) -> Result<(Arc<str>, &mut Group), BrokerError> {
        let unknown = || BrokerError::UnknownGroup {
            group: group.to_string(),
            topic: topic.to_string(),
        };
        let t = self.topics.get_mut(topic).ok_or_else(unknown)?;
        let name = t.name.clone();
        let g = t.groups.get_mut(group).ok_or_else(unknown)?;
        Ok((name, g))
    }

    /// Hands out the next message available at `now`, redeliveries first.
    pub fn consume(
        &mut self,
        group: &str,
        topic: &str,
        now: u64,
    ) -> Result<Option<Envelope>, BrokerError> {
        self.take(group, topic, now, false)
    }

    /// Like [`Broker::consume`], but the delivery is acknowledged on hand-out.
    pub fn consume_auto_ack(
        &mut self,
        group: &str,
        topic: &str,
        now: u64,
    ) -> Result<Option<Envelope>, BrokerError> {
        self.take(group, topic, now, true)
    }

    fn take(
        &mut self,
        group: &str,
        topic: &str,
        now: u64,
        auto_ack: bool,
    ) -> Result<Option<Envelope>, BrokerError> {
        let delivery_id = self.next_delivery;
        let visibility = self.visibility_ms;
        let (name, g) = self.group_mut(group, topic)?;
        expire(g, now);
        let (msg, count, available_ts) = match g.redeliver.front() {
            Some(r) if r.available_ts <= now => {
                let r = g.redeliver.pop_front().expect("front exists");
                (r.msg, r.count, r.available_ts)
            }
            _ => match g.pending.front() {
                Some(m) if m.publish_ts <= now => {
                    let m = g.pending.pop_front().expect("front exists");
                    let ts = m.publish_ts;
                    (m, 0, ts)
                }
                _ => return Ok(None),
            },
        };
        let env = Envelope {
            delivery_id,
            message_id: msg.id,
            topic: name,
            payload: msg.payload.clone(),
            publish_ts: msg.publish_ts,
            redelivery_count: count,
            available_ts,
        };
        if auto_ack {
            g.acked += 1;
        } else {
            let deadline = now + visibility;
            g.deadlines.insert((deadline, delivery_id));
            g.unacked.insert(
                delivery_id,
                InFlight {
                    msg,
                    count,
                    deadline,
                },
            );
        }
        self.next_delivery += 1;
        Ok(Some(env))
    }

    pub fn ack(&mut self, group: &str, topic: &str, delivery_id: u64) -> Result<(), BrokerError> {
        let (_, g) = self.group_mut(group, topic)?;
        let f = g
            .unacked
            .remove(&delivery_id)
            .ok_or(BrokerError::UnknownDelivery(delivery_id))?;
        g.deadlines.remove(&(f.deadline, delivery_id));
        g.acked += 1;
        Ok(())
    }

    /// Returns a delivery for immediate redelivery.
    pub fn nack(
        &mut self,
        group: &str,
        topic: &str,
        delivery_id: u64,
        now: u64,
    ) -> Result<(), BrokerError> {
        let (_, g) = self.group_mut(group, topic)?;
        let f = g
            .unacked
            .remove(&delivery_id)
            .ok_or(BrokerError::UnknownDelivery(delivery_id))?;
        g.deadlines.remove(&(f.deadline, delivery_id));
        requeue(g, f, now);
        Ok(())
    }

    /// The consumer went away: everything it holds becomes redeliverable.
    pub fn disconnect(&mut self, group: &str, topic: &str, now: u64) -> Result<(), BrokerError> {
        let (_, g) = self.group_mut(group, topic)?;
        let held = core::mem::take(&mut g.unacked);
        g.deadlines.clear();
        for (_, f) in held {
            requeue(g, f, now);
        }
        Ok(())
    }

    pub fn stats(&self, group: &str, topic: &str) -> GroupStats {
        let Some(g) = self.topics.get(topic).and_then(|t| t.groups.get(group)) else {
            return GroupStats::default();
        };
        GroupStats {
            published: g.published,
            acked: g.acked,
            pending: (g.pending.len() + g.redeliver.len()) as u64,
            unacked: g.unacked.len() as u64,
        }
    }

    /// Messages published to `topic` and not yet handed to any group.
    pub fn retained(&self, topic: &str) -> usize {
        self.topics.get(topic).map_or(0, |t| t.retained.len())
    }

    /// Payloads currently held for `topic` before any group subscribed,
    /// in publish order.
    pub fn peek_retained(&self, topic: &str) -> impl Iterator<Item = (MessageId, &[u8])> {
        self.topics
            .get(topic)
            .into_iter()
            .flat_map(|t| t.retained.iter().map(|m| (m.id, m.payload.as_ref())))
    }
}

fn expire(g: &mut Group, now: u64) {
    while let Some(&(deadline, id)) = g.deadlines.first() {
        if deadline > now {
            break;
        }
        g.deadlines.pop_first();
        if let Some(f) = g.unacked.remove(&id) {
            requeue(g, f, deadline);
        }
    }
}

fn requeue(g: &mut Group, f: InFlight, available_ts: u64) {
    g.redeliver.push_back(Redelivery {
        msg: f.msg,
        count: f.count + 1,
        available_ts,
    });
}
