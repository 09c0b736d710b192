//! A small ROS-style message bus.
//!
//! Nodes register by id, publish [`Payload`]s on named topics and expose
//! request/response services. Delivery is pull-driven: [`Bus::spin_once`]
//! drains every subscription queue in node-registration order and invokes the
//! subscriber callbacks. The bus is `Clone + Send + Sync`; every clone refers
//! to the same registry, so it can be shared across threads.
//!
//! Guarantees:
//!
//! - envelopes carry a sequence number that strictly increases per
//!   (publisher, topic), and each subscriber observes them in that order;
//! - a subscriber only sees envelopes published after it subscribed;
//! - queues are bounded and drop the oldest envelope on overflow;
//! - a successful service call invokes its responder exactly once.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

/// Default per-subscription queue capacity.
pub const DEFAULT_QUEUE_CAPACITY: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BusError {
    #[error("node id must not be empty")]
    EmptyNodeId,
    #[error("topic or service name must not be empty")]
    EmptyName,
    #[error("node '{0}' is already registered")]
    DuplicateNode(String),
    #[error("node '{0}' is not registered on this bus")]
    UnknownNode(String),
    #[error("service '{0}' is already advertised")]
    DuplicateService(String),
    #[error("service '{service}' did not respond within {timeout_ticks} ticks")]
    Timeout { service: String, timeout_ticks: u64 },
    #[error("service '{service}' call failed: {reason}")]
    ResponderFault { service: String, reason: String },
    #[error("timeout must be at least one tick")]
    InvalidTimeout,
    #[error("queue capacity must be at least 1")]
    InvalidCapacity,
}

/// A scalar stored in a structured payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            Value::Text(t) => t.trim().parse().ok(),
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(t) => Some(t),
            Value::Number(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `Display` for f64 is the shortest representation that round-trips.
            Value::Number(n) => write!(f, "{n}"),
            Value::Text(t) => f.write_str(t),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Number(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// Key-value payload with a stable (sorted) key order.
pub type Structured = BTreeMap<String, Value>;

/// The closed set of message payloads carried by the bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", content = "data")]
pub enum Payload {
    Text(String),
    Blob(Vec<u8>),
    Structured(Structured),
}

impl Payload {
    pub fn tag(&self) -> &'static str {
        match self {
            Payload::Text(_) => "Text",
            Payload::Blob(_) => "Blob",
            Payload::Structured(_) => "Structured",
        }
    }

    /// Short human-readable description used in delivery traces.
    pub fn summary(&self) -> String {
        match self {
            Payload::Text(t) => {
                let mut s: String = t.chars().take(48).collect();
                if t.chars().count() > 48 {
                    s.push_str("...");
                }
                format!("Text({s})")
            }
            Payload::Blob(b) => format!("Blob({} bytes)", b.len()),
            Payload::Structured(m) => format!("Structured({} keys)", m.len()),
        }
    }

    pub fn as_structured(&self) -> Option<&Structured> {
        match self {
            Payload::Structured(m) => Some(m),
            _ => None,
        }
    }
}

/// A routed message.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub topic: String,
    pub payload: Arc<Payload>,
    pub publisher_id: String,
    pub sequence: u64,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueConfig {
    capacity: usize,
}

impl QueueConfig {
    pub fn new(capacity: usize) -> Result<Self, BusError> {
        if capacity == 0 {
            return Err(BusError::InvalidCapacity);
        }
        Ok(Self { capacity })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

impl Default for QueueConfig {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }
}

/// Handle returned by [`Bus::register_node`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeHandle {
    id: Arc<str>,
    index: usize,
}

impl NodeHandle {
    pub fn id(&self) -> &str {
        &self.id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubscriptionId(u64);

/// One line of the delivery trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub tick: u64,
    pub subscriber: String,
    pub topic: String,
    pub publisher: String,
    pub sequence: u64,
    pub payload: String,
}

type Callback = Box<dyn FnMut(&Envelope) + Send>;
type Responder = Arc<dyn Fn(&Payload) -> Result<Payload, String> + Send + Sync>;

struct Subscription {
    node_index: usize,
    topic: String,
    capacity: usize,
    queue: VecDeque<Envelope>,
    callback: Arc<Mutex<Callback>>,
}

struct Service {
    latency_ticks: u64,
    responder: Responder,
}

struct NodeEntry {
    id: Arc<str>,
    topics: BTreeSet<String>,
    services: BTreeSet<String>,
}

#[derive(Default)]
struct Registry {
    nodes: Vec<NodeEntry>,
    node_ids: HashMap<Arc<str>, usize>,
    // Keyed by (node registration index, subscription id) so iteration gives
    // the deterministic delivery order.
    subscriptions: BTreeMap<(usize, SubscriptionId), Subscription>,
    topic_subscribers: HashMap<String, Vec<(usize, SubscriptionId)>>,
    sequences: HashMap<(usize, String), u64>,
    services: HashMap<String, Service>,
    next_subscription: u64,
    clock: u64,
    dropped: u64,
    trace: Option<Vec<TraceEntry>>,
}

struct Inner {
    registry: Mutex<Registry>,
    // Serializes spin_once so batches for one subscription are delivered in order
    // even when several threads spin.
    spin: Mutex<()>,
}

#[derive(Clone)]
pub struct Bus {
    inner: Arc<Inner>,
}

impl Default for Bus {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Bus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let reg = self.lock();
        f.debug_struct("Bus")
            .field("nodes", &reg.nodes.len())
            .field("subscriptions", &reg.subscriptions.len())
            .field("clock", &reg.clock)
            .finish()
    }
}

fn lock_ignoring_poison<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Bus {
    pub fn new() -> Self {
        Self {
            inner: Arc::new(Inner {
                registry: Mutex::new(Registry::default()),
                spin: Mutex::new(()),
            }),
        }
    }

    /// A bus that records every delivery for [`Bus::trace`].
    pub fn with_tracing() -> Self {
        let bus = Self::new();
        bus.lock().trace = Some(Vec::new());
        bus
    }

    fn lock(&self) -> MutexGuard<'_, Registry> {
        lock_ignoring_poison(&self.inner.registry)
    }

    fn check_node(reg: &Registry, handle: &NodeHandle) -> Result<(), BusError> {
        match reg.nodes.get(handle.index) {
            Some(n) if n.id == handle.id => Ok(()),
            _ => Err(BusError::UnknownNode(handle.id.to_string())),
        }
    }

    pub fn register_node(&self, node_id: &str) -> Result<NodeHandle, BusError> {
        if node_id.is_empty() {
            return Err(BusError::EmptyNodeId);
        }
        let mut reg = self.lock();
        if reg.node_ids.contains_key(node_id) {
            return Err(BusError::DuplicateNode(node_id.to_string()));
        }
        let id: Arc<str> = Arc::from(node_id);
        let index = reg.nodes.len();
        reg.nodes.push(NodeEntry {
            id: id.clone(),
            topics: BTreeSet::new(),
            services: BTreeSet::new(),
        });
        reg.node_ids.insert(id.clone(), index);
        Ok(NodeHandle { id, index })
    }

    /// Topics the node has subscribed to or published on.
    pub fn registered_topics(&self, handle: &NodeHandle) -> BTreeSet<String> {
        let reg = self.lock();
        reg.nodes
            .get(handle.index)
            .map(|n| n.topics.clone())
            .unwrap_or_default()
    }

    pub fn registered_services(&self, handle: &NodeHandle) -> BTreeSet<String> {
        let reg = self.lock();
        reg.nodes
            .get(handle.index)
            .map(|n| n.services.clone())
            .unwrap_or_default()
    }

    pub fn node_ids(&self) -> Vec<String> {
        self.lock().nodes.iter().map(|n| n.id.to_string()).collect()
    }

    pub fn subscribe<F>(
        &self,
        handle: &NodeHandle,
        topic: &str,
        queue: QueueConfig,
        callback: F,
    ) -> Result<SubscriptionId, BusError>
    where
        F: FnMut(&Envelope) + Send + 'static,
    {
        if topic.is_empty() {
            return Err(BusError::EmptyName);
        }
        let mut reg = self.lock();
        Self::check_node(&reg, handle)?;
        let id = SubscriptionId(reg.next_subscription);
        reg.next_subscription += 1;
        let key = (handle.index, id);
        reg.subscriptions.insert(
            key,
            Subscription {
                node_index: handle.index,
                topic: topic.to_string(),
                capacity: queue.capacity,
                queue: VecDeque::new(),
                callback: Arc::new(Mutex::new(Box::new(callback))),
            },
        );
        reg.topic_subscribers
            .entry(topic.to_string())
            .or_default()
            .push(key);
        reg.nodes[handle.index].topics.insert(topic.to_string());
        Ok(id)
    }

    pub fn unsubscribe(&self, id: SubscriptionId) {
        let mut reg = self.lock();
        let Some(key) = reg.subscriptions.keys().find(|k| k.1 == id).copied() else {
            return;
        };
        if let Some(sub) = reg.subscriptions.remove(&key) {
            if let Some(list) = reg.topic_subscribers.get_mut(&sub.topic) {
                list.retain(|k| *k != key);
            }
        }
    }

    /// Enqueues the payload for every current subscriber of `topic` and returns
    /// the envelope's sequence number. Zero subscribers is not an error.
    pub fn publish(
        &self,
        handle: &NodeHandle,
        topic: &str,
        payload: Payload,
    ) -> Result<u64, BusError> {
        if topic.is_empty() {
            return Err(BusError::EmptyName);
        }
        let mut reg = self.lock();
        Self::check_node(&reg, handle)?;
        reg.nodes[handle.index].topics.insert(topic.to_string());
        let seq_slot = reg
            .sequences
            .entry((handle.index, topic.to_string()))
            .or_insert(0);
        *seq_slot += 1;
        let sequence = *seq_slot;
        let envelope = Envelope {
            topic: topic.to_string(),
            payload: Arc::new(payload),
            publisher_id: handle.id.to_string(),
            sequence,
            timestamp: reg.clock,
        };
        let keys = reg
            .topic_subscribers
            .get(topic)
            .cloned()
            .unwrap_or_default();
        let mut dropped = 0;
        for key in keys {
            if let Some(sub) = reg.subscriptions.get_mut(&key) {
                if sub.queue.len() == sub.capacity {
                    sub.queue.pop_front();
                    dropped += 1;
                }
                sub.queue.push_back(envelope.clone());
            }
        }
        reg.dropped += dropped;
        Ok(sequence)
    }

    /// Number of envelopes discarded by drop-oldest overflow so far.
    pub fn dropped_count(&self) -> u64 {
        self.lock().dropped
    }

    pub fn pending_count(&self) -> usize {
        self.lock()
            .subscriptions
            .values()
            .map(|s| s.queue.len())
            .sum()
    }

    pub fn advertise_service<F>(
        &self,
        handle: &NodeHandle,
        service: &str,
        responder: F,
    ) -> Result<(), BusError>
    where
        F: Fn(&Payload) -> Result<Payload, String> + Send + Sync + 'static,
    {
        self.advertise_service_with_latency(handle, service, 0, responder)
    }

    /// Advertises a service that needs `latency_ticks` to answer. Calls whose
    /// timeout is not larger than the latency time out without invoking the
    /// responder.
    pub fn advertise_service_with_latency<F>(
        &self,
        handle: &NodeHandle,
        service: &str,
        latency_ticks: u64,
        responder: F,
    ) -> Result<(), BusError>
    where
        F: Fn(&Payload) -> Result<Payload, String> + Send + Sync + 'static,
    {
        if service.is_empty() {
            return Err(BusError::EmptyName);
        }
        let mut reg = self.lock();
        Self::check_node(&reg, handle)?;
        if reg.services.contains_key(service) {
            return Err(BusError::DuplicateService(service.to_string()));
        }
        reg.services.insert(
            service.to_string(),
            Service {
                latency_ticks,
                responder: Arc::new(responder),
            },
        );
        reg.nodes[handle.index].services.insert(service.to_string());
        Ok(())
    }

    pub fn has_service(&self, service: &str) -> bool {
        self.lock().services.contains_key(service)
    }

    pub fn call_service(
        &self,
        handle: &NodeHandle,
        service: &str,
        request: &Payload,
        timeout_ticks: u64,
    ) -> Result<Payload, BusError> {
        if timeout_ticks == 0 {
            return Err(BusError::InvalidTimeout);
        }
        let responder = {
            let reg = self.lock();
            Self::check_node(&reg, handle)?;
            match reg.services.get(service) {
                Some(s) if s.latency_ticks < timeout_ticks => s.responder.clone(),
                _ => {
                    return Err(BusError::Timeout {
                        service: service.to_string(),
                        timeout_ticks,
                    })
                }
            }
        };
        // The registry lock is released so responders may use the bus.
        responder(request).map_err(|reason| BusError::ResponderFault {
            service: service.to_string(),
            reason,
        })
    }

    /// Delivers every pending envelope once, subscriptions visited in node
    /// registration order. Envelopes published by callbacks during the spin
    /// are delivered by the next spin. Returns the number delivered.
    pub fn spin_once(&self) -> usize {
        let _spin = lock_ignoring_poison(&self.inner.spin);
        let batches: Vec<(String, Arc<Mutex<Callback>>, Vec<Envelope>)> = {
            let mut reg = self.lock();
            let mut batches = Vec::new();
            let mut trace_lines = Vec::new();
            let tick = reg.clock;
            let tracing = reg.trace.is_some();
            for sub in reg.subscriptions.values_mut() {
                if sub.queue.is_empty() {
                    continue;
                }
                let drained: Vec<Envelope> = sub.queue.drain(..).collect();
                batches.push((sub.node_index, sub.callback.clone(), drained));
            }
            let mut out = Vec::with_capacity(batches.len());
            for (node_index, cb, envs) in batches {
                let subscriber = reg.nodes[node_index].id.to_string();
                if tracing {
                    for e in &envs {
                        trace_lines.push(TraceEntry {
                            tick,
                            subscriber: subscriber.clone(),
                            topic: e.topic.clone(),
                            publisher: e.publisher_id.clone(),
                            sequence: e.sequence,
                            payload: e.payload.summary(),
                        });
                    }
                }
                out.push((subscriber, cb, envs));
            }
            if let Some(trace) = reg.trace.as_mut() {
                trace.extend(trace_lines);
            }
            out
        };
        let mut delivered = 0;
        for (_, cb, envs) in batches {
            let mut cb = lock_ignoring_poison(&cb);
            for env in &envs {
                (cb)(env);
                delivered += 1;
            }
        }
        delivered
    }

    pub fn clock(&self) -> u64 {
        self.lock().clock
    }

    pub fn set_clock(&self, tick: u64) {
        self.lock().clock = tick;
    }

    pub fn advance_clock(&self) -> u64 {
        let mut reg = self.lock();
        reg.clock += 1;
        reg.clock
    }

    pub fn trace(&self) -> Vec<TraceEntry> {
        self.lock().trace.clone().unwrap_or_default()
    }

    /// Delivery trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in self.trace() {
            out.push_str(&serde_json::to_string(&entry).expect("trace entry serializes"));
            out.push('\n');
        }
        out
    }
}
