use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};

use parking_lot::Mutex;
use tokio::sync::Notify;

use crate::clock::Millis;
use crate::protocol::{encode_control, Control, ControlMessage};

/// Frame ready to leave the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outgoing {
    Text(String),
    Binary(Vec<u8>),
    Close { code: u16, reason: String },
}

pub const CLOSE_NORMAL: u16 = 1000;
pub const CLOSE_GOING_AWAY: u16 = 1001;
pub const CLOSE_POLICY: u16 = 1008;
pub const SLOW_CONSUMER: &str = "slow_consumer";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub room_id: String,
    pub participant_id: u16,
}

#[derive(Debug, Default)]
pub struct PlaneCounters {
    pub bytes: AtomicU64,
    pub messages: AtomicU64,
}

impl PlaneCounters {
    fn add(&self, bytes: usize) {
        self.bytes.fetch_add(bytes as u64, Ordering::Relaxed);
        self.messages.fetch_add(1, Ordering::Relaxed);
    }

    pub fn bytes(&self) -> u64 {
        self.bytes.load(Ordering::Relaxed)
    }

    pub fn messages(&self) -> u64 {
        self.messages.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Default)]
pub struct ConnectionCounters {
    pub control_in: PlaneCounters,
    pub control_out: PlaneCounters,
    pub pose_in: PlaneCounters,
    pub pose_out: PlaneCounters,
    pub pose_backpressure_drops: AtomicU64,
    pub malformed_pose: AtomicU64,
    pub max_pose_packet: AtomicU64,
}

#[derive(Debug, Default)]
struct Outbox {
    control: VecDeque<String>,
    pose: VecDeque<Vec<u8>>,
    queued_bytes: usize,
    next_seq: u64,
    close: Option<(u16, String)>,
}

/// One client connection. The hub enqueues, the transport drains.
#[derive(Debug)]
pub struct Connection {
    id: u64,
    limit: usize,
    outbox: Mutex<Outbox>,
    notify: Notify,
    binding: Mutex<Option<Binding>>,
    last_heartbeat: AtomicU64,
    malformed_control: AtomicU32,
    closed: AtomicBool,
    pub counters: ConnectionCounters,
}

impl Connection {
    pub(crate) fn new(id: u64, limit: usize, now: Millis) -> Self {
        Self {
            id,
            limit,
            outbox: Mutex::new(Outbox::default()),
            notify: Notify::new(),
            binding: Mutex::new(None),
            last_heartbeat: AtomicU64::new(now),
            malformed_control: AtomicU32::new(0),
            closed: AtomicBool::new(false),
            counters: ConnectionCounters::default(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn binding(&self) -> Option<Binding> {
        self.binding.lock().clone()
    }

    pub(crate) fn bind(&self, binding: Binding) {
        *self.binding.lock() = Some(binding);
    }

    pub(crate) fn unbind(&self) -> Option<Binding> {
        self.binding.lock().take()
    }

    pub fn last_heartbeat(&self) -> Millis {
        self.last_heartbeat.load(Ordering::Relaxed)
    }

    pub(crate) fn touch(&self, now: Millis) {
        self.last_heartbeat.fetch_max(now, Ordering::Relaxed);
    }

    pub(crate) fn note_malformed_control(&self) -> u32 {
        self.malformed_control.fetch_add(1, Ordering::Relaxed) + 1
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }

    pub fn close_reason(&self) -> Option<String> {
        self.outbox.lock().close.as_ref().map(|(_, reason)| reason.clone())
    }

    pub fn queued_bytes(&self) -> usize {
        self.outbox.lock().queued_bytes
    }

    /// Queues a control message, stamping the per-connection sequence
    /// number. If the queue would exceed its limit, pending poses are
    /// discarded first; if that is not enough the connection is closed.
    /// Returns false when the connection is (now) closed.
    pub fn send_control(&self, body: Control) -> bool {
        let mut outbox = self.outbox.lock();
        if outbox.close.is_some() {
            return false;
        }
        let text = encode_control(&ControlMessage { seq: outbox.next_seq, body });
        if outbox.queued_bytes + text.len() > self.limit {
            let dropped = outbox.pose.len() as u64;
            let freed: usize = outbox.pose.drain(..).map(|p| p.len()).sum();
            outbox.queued_bytes -= freed;
            self.counters.pose_backpressure_drops.fetch_add(dropped, Ordering::Relaxed);
        }
        if outbox.queued_bytes + text.len() > self.limit {
            drop(outbox);
            self.close(CLOSE_POLICY, SLOW_CONSUMER);
            return false;
        }
        outbox.next_seq += 1;
        outbox.queued_bytes += text.len();
        outbox.control.push_back(text);
        drop(outbox);
        self.notify.notify_one();
        true
    }

    /// Queues a pose packet unless that would exceed the queue limit.
    pub fn send_pose(&self, packet: &[u8]) -> bool {
        let mut outbox = self.outbox.lock();
        if outbox.close.is_some() {
            return false;
        }
        if outbox.queued_bytes + packet.len() > self.limit {
            self.counters.pose_backpressure_drops.fetch_add(1, Ordering::Relaxed);
            return false;
        }
        outbox.queued_bytes += packet.len();
        outbox.pose.push_back(packet.to_vec());
        drop(outbox);
        self.notify.notify_one();
        true
    }

    /// Requests closure after already queued control messages. Queued
    /// poses are discarded.
    pub fn close(&self, code: u16, reason: &str) {
        let mut outbox = self.outbox.lock();
        if outbox.close.is_none() {
            let freed: usize = outbox.pose.drain(..).map(|p| p.len()).sum();
            outbox.queued_bytes -= freed;
            outbox.close = Some((code, reason.to_owned()));
        }
        drop(outbox);
        self.closed.store(true, Ordering::Release);
        self.notify.notify_one();
    }

    /// Takes everything queued: control first, then poses, then the close
    /// frame if one was requested. Egress counters are updated here.
    pub fn drain(&self) -> Vec<Outgoing> {
        let mut outbox = self.outbox.lock();
        let mut out = Vec::with_capacity(outbox.control.len() + outbox.pose.len() + 1);
        for text in outbox.control.drain(..) {
            self.counters.control_out.add(text.len());
            out.push(Outgoing::Text(text));
        }
        for packet in outbox.pose.drain(..) {
            self.counters.pose_out.add(packet.len());
            self.counters.max_pose_packet.fetch_max(packet.len() as u64, Ordering::Relaxed);
            out.push(Outgoing::Binary(packet));
        }
        outbox.queued_bytes = 0;
        if let Some((code, reason)) = outbox.close.clone() {
            out.push(Outgoing::Close { code, reason });
        }
        out
    }

    /// Waits until something is queued.
    pub async fn ready(&self) {
        self.notify.notified().await
    }

    pub(crate) fn record_ingress_control(&self, bytes: usize) {
        self.counters.control_in.add(bytes);
    }

    pub(crate) fn record_ingress_pose(&self, bytes: usize) {
        self.counters.pose_in.add(bytes);
    }
}
