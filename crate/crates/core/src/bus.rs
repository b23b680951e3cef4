//! Minimal in-process publish/subscribe bus with topic wildcards.
//!
//! Topics are slash-separated levels (`drift/dev1/temperature/announce`).
//! Subscription patterns may use `+` to match exactly one level and a
//! trailing `#` to match any remaining levels. Delivery is at-most-once per
//! subscription, per-topic FIFO, and never replays messages published before
//! the subscription existed. The bus is safe for concurrent publishers;
//! each [`Subscription`] is a single consumer.

use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// A delivered message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusMessage {
    /// Topic the message was published to.
    pub topic: String,
    /// Raw payload bytes (JSON by convention).
    pub payload: Vec<u8>,
    /// Bus-wide publish sequence number (strictly increasing).
    pub publish_seq: u64,
}

impl BusMessage {
    /// Deserializes the payload as JSON.
    pub fn json<T: DeserializeOwned>(&self) -> Result<T> {
        Ok(serde_json::from_slice(&self.payload)?)
    }
}

struct SubEntry {
    id: u64,
    pattern: Vec<String>,
    sender: mpsc::Sender<BusMessage>,
}

#[derive(Default)]
struct BusInner {
    subs: Vec<SubEntry>,
    next_seq: u64,
    next_sub_id: u64,
    closed: bool,
}

/// Handle to a shared in-process bus; clones publish to the same bus.
#[derive(Clone, Default)]
pub struct Bus {
    inner: Arc<Mutex<BusInner>>,
}

/// A registered pattern subscription; dropping it unsubscribes.
pub struct Subscription {
    id: u64,
    pattern: String,
    receiver: mpsc::Receiver<BusMessage>,
    bus: Arc<Mutex<BusInner>>,
}

fn validate_topic(topic: &str) -> Result<()> {
    if topic.is_empty() {
        return Err(Error::input("topic must be non-empty"));
    }
    if topic.contains(['+', '#']) {
        return Err(Error::input(format!("topic '{topic}' must not contain wildcards")));
    }
    Ok(())
}

fn parse_pattern(pattern: &str) -> Result<Vec<String>> {
    if pattern.is_empty() {
        return Err(Error::input("subscription pattern must be non-empty"));
    }
    let levels: Vec<String> = pattern.split('/').map(str::to_string).collect();
    for (i, level) in levels.iter().enumerate() {
        match level.as_str() {
            "#" if i + 1 != levels.len() => {
                return Err(Error::input(format!(
                    "'#' must be the final level in pattern '{pattern}'"
                )));
            }
            "#" | "+" => {}
            l if l.contains(['+', '#']) => {
                return Err(Error::input(format!(
                    "wildcard must occupy a whole level in pattern '{pattern}'"
                )));
            }
            _ => {}
        }
    }
    Ok(levels)
}

fn matches(pattern: &[String], topic: &str) -> bool {
    let mut topic_levels = topic.split('/');
    for (i, p) in pattern.iter().enumerate() {
        if p == "#" {
            // A trailing '#' also matches the parent topic itself.
            debug_assert_eq!(i + 1, pattern.len());
            return true;
        }
        match topic_levels.next() {
            Some(t) if p == "+" || p == t => {}
            _ => return false,
        }
    }
    topic_levels.next().is_none()
}

impl Bus {
    /// Creates an open bus.
    pub fn new() -> Self {
        Bus::default()
    }

    /// Publishes a payload; delivered to every currently matching
    /// subscription.
    pub fn publish(&self, topic: &str, payload: impl Into<Vec<u8>>) -> Result<u64> {
        validate_topic(topic)?;
        let mut inner = self.inner.lock().expect("bus lock");
        if inner.closed {
            return Err(Error::BusClosed);
        }
        let seq = inner.next_seq;
        inner.next_seq += 1;
        let payload = payload.into();
        // Prune subscriptions whose receiver is gone.
        inner.subs.retain(|sub| {
            if !matches(&sub.pattern, topic) {
                return true;
            }
            sub.sender
                .send(BusMessage { topic: topic.to_string(), payload: payload.clone(), publish_seq: seq })
                .is_ok()
        });
        Ok(seq)
    }

    /// Serializes `value` as JSON and publishes it.
    pub fn publish_json<T: Serialize>(&self, topic: &str, value: &T) -> Result<u64> {
        self.publish(topic, serde_json::to_vec(value)?)
    }

    /// Registers a wildcard subscription; only messages published after this
    /// call are delivered.
    pub fn subscribe(&self, pattern: &str) -> Result<Subscription> {
        let levels = parse_pattern(pattern)?;
        let mut inner = self.inner.lock().expect("bus lock");
        if inner.closed {
            return Err(Error::BusClosed);
        }
        let id = inner.next_sub_id;
        inner.next_sub_id += 1;
        let (sender, receiver) = mpsc::channel();
        inner.subs.push(SubEntry { id, pattern: levels, sender });
        Ok(Subscription { id, pattern: pattern.to_string(), receiver, bus: Arc::clone(&self.inner) })
    }

    /// Closes the bus; subsequent publishes and subscribes fail.
    pub fn close(&self) {
        let mut inner = self.inner.lock().expect("bus lock");
        inner.closed = true;
        inner.subs.clear();
    }

    /// True once [`Bus::close`] has been called.
    pub fn is_closed(&self) -> bool {
        self.inner.lock().expect("bus lock").closed
    }
}

impl Subscription {
    /// The pattern this subscription was registered with.
    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    /// Returns the next pending message, if any.
    pub fn try_recv(&self) -> Option<BusMessage> {
        self.receiver.try_recv().ok()
    }

    /// Waits up to `timeout` for the next message.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<BusMessage> {
        self.receiver.recv_timeout(timeout).ok()
    }

    /// Drains every pending message in delivery order.
    pub fn drain(&self) -> Vec<BusMessage> {
        let mut out = Vec::new();
        while let Some(msg) = self.try_recv() {
            out.push(msg);
        }
        out
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        if let Ok(mut inner) = self.bus.lock() {
            inner.subs.retain(|s| s.id != self.id);
        }
    }
}
