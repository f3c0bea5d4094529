//! Plain-text counters, one per line: `name{label="v",...} value`.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use super::connection::Connection;
use super::hub::Hub;
use crate::protocol::Role;

#[derive(Debug, Default)]
pub struct HubCounters {
    pub connections_opened: AtomicU64,
    pub connections_closed: AtomicU64,
    pub rooms_created: AtomicU64,
    pub rooms_closed: AtomicU64,
    pub malformed_control: AtomicU64,
    pub malformed_pose: AtomicU64,
    pub pose_unbound: AtomicU64,
    pub pose_accepted: AtomicU64,
    pub pose_rejected: AtomicU64,
    pub pose_coalesced: AtomicU64,
    pub slow_consumer_disconnects: AtomicU64,
    pub heartbeat_disconnects: AtomicU64,
    pub asset_bytes_served: AtomicU64,
    pub asset_uploads: AtomicU64,
    pub ticks: AtomicU64,
    retired: [AtomicU64; 4],
    retired_backpressure: AtomicU64,
}

const PLANES: [(&str, &str); 4] = [("control", "in"), ("control", "out"), ("pose", "in"), ("pose", "out")];

fn plane_bytes(conn: &Connection) -> [u64; 4] {
    let c = &conn.counters;
    [c.control_in.bytes(), c.control_out.bytes(), c.pose_in.bytes(), c.pose_out.bytes()]
}

impl HubCounters {
    /// Folds a closed connection's traffic into the server totals.
    pub(crate) fn retire(&self, conn: &Connection) {
        self.connections_closed.fetch_add(1, Ordering::Relaxed);
        for (slot, bytes) in self.retired.iter().zip(plane_bytes(conn)) {
            slot.fetch_add(bytes, Ordering::Relaxed);
        }
        self.retired_backpressure
            .fetch_add(conn.counters.pose_backpressure_drops.load(Ordering::Relaxed), Ordering::Relaxed);
    }
}

fn line(out: &mut String, name: &str, labels: &[(&str, String)], value: u64) {
    out.push_str(name);
    if !labels.is_empty() {
        out.push('{');
        for (k, (key, v)) in labels.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{key}=\"{}\"", v.replace('\\', "\\\\").replace('"', "\\\""));
        }
        out.push('}');
    }
    let _ = writeln!(out, " {value}");
}

pub fn render(hub: &Hub) -> String {
    let c = &hub.counters;
    let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
    let mut out = String::new();
    line(&mut out, "molxr_rooms", &[], hub.room_count() as u64);
    line(&mut out, "molxr_connections", &[], hub.connection_count() as u64);
    for (name, counter) in [
        ("molxr_connections_opened_total", &c.connections_opened),
        ("molxr_connections_closed_total", &c.connections_closed),
        ("molxr_rooms_created_total", &c.rooms_created),
        ("molxr_rooms_closed_total", &c.rooms_closed),
        ("molxr_control_malformed_total", &c.malformed_control),
        ("molxr_pose_malformed_total", &c.malformed_pose),
        ("molxr_pose_unbound_total", &c.pose_unbound),
        ("molxr_pose_accepted_total", &c.pose_accepted),
        ("molxr_pose_rejected_total", &c.pose_rejected),
        ("molxr_pose_coalesced_total", &c.pose_coalesced),
        ("molxr_slow_consumer_disconnects_total", &c.slow_consumer_disconnects),
        ("molxr_heartbeat_disconnects_total", &c.heartbeat_disconnects),
        ("molxr_asset_bytes_served_total", &c.asset_bytes_served),
        ("molxr_asset_uploads_total", &c.asset_uploads),
        ("molxr_ticks_total", &c.ticks),
    ] {
        line(&mut out, name, &[], get(counter));
    }

    let connections = hub.connections();
    let mut totals: [u64; 4] = std::array::from_fn(|k| get(&c.retired[k]));
    let mut backpressure = get(&c.retired_backpressure);
    for conn in &connections {
        for (t, b) in totals.iter_mut().zip(plane_bytes(conn)) {
            *t += b;
        }
        backpressure += conn.counters.pose_backpressure_drops.load(Ordering::Relaxed);
    }
    for ((plane, direction), value) in PLANES.iter().zip(totals) {
        line(&mut out, "molxr_bytes_total", &[("plane", plane.to_string()), ("direction", direction.to_string())], value);
    }
    line(&mut out, "molxr_pose_backpressure_drops_total", &[], backpressure);

    for (room_id, slot) in hub.slots() {
        let slot = slot.lock();
        let mut roles: BTreeMap<Role, u64> = Role::ALL.iter().map(|r| (*r, 0)).collect();
        for p in slot.room.state().participants.values() {
            *roles.entry(p.role).or_default() += 1;
        }
        for (role, n) in roles {
            line(&mut out, "molxr_room_participants", &[("room", room_id.clone()), ("role", role.to_string())], n);
        }
        let counters = slot.room.counters();
        let room = || ("room", room_id.clone());
        line(&mut out, "molxr_room_pose_coalesced_total", &[room()], slot.coalesced);
        line(&mut out, "molxr_room_transforms_accepted_total", &[room()], counters.transforms_accepted);
        line(&mut out, "molxr_room_transforms_dropped_total", &[room()], counters.transforms_dropped);
        line(&mut out, "molxr_room_avatars_accepted_total", &[room()], counters.avatars_accepted);
        line(&mut out, "molxr_room_avatars_dropped_total", &[room()], counters.avatars_dropped);
        line(&mut out, "molxr_room_events", &[room()], slot.room.log().len() as u64);
    }

    for conn in &connections {
        let binding = conn.binding();
        let base = vec![
            ("conn", conn.id().to_string()),
            ("room", binding.as_ref().map(|b| b.room_id.clone()).unwrap_or_default()),
            ("participant", binding.as_ref().map(|b| b.participant_id.to_string()).unwrap_or_default()),
        ];
        let with = |extra: &[(&'static str, &str)]| {
            let mut labels = base.clone();
            labels.extend(extra.iter().map(|(k, v)| (*k, v.to_string())));
            labels
        };
        let k = &conn.counters;
        for ((plane, direction), counters) in PLANES.iter().zip([&k.control_in, &k.control_out, &k.pose_in, &k.pose_out]) {
            let labels = with(&[("plane", plane), ("direction", direction)]);
            line(&mut out, "molxr_connection_bytes_total", &labels, counters.bytes());
            line(&mut out, "molxr_connection_messages_total", &labels, counters.messages());
        }
        line(&mut out, "molxr_connection_pose_backpressure_drops_total", &base, get(&k.pose_backpressure_drops));
        line(&mut out, "molxr_connection_pose_malformed_total", &base, get(&k.malformed_pose));
        line(&mut out, "molxr_connection_max_pose_packet_bytes", &base, get(&k.max_pose_packet));
        line(&mut out, "molxr_connection_queued_bytes", &base, conn.queued_bytes() as u64);
    }
    out
}

/// One parsed metrics line.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub labels: BTreeMap<String, String>,
    pub value: f64,
}

impl Sample {
    pub fn label(&self, key: &str) -> Option<&str> {
        self.labels.get(key).map(String::as_str)
    }
}

/// Parses the text produced by [`render`]. Unparseable lines are skipped.
pub fn parse_metrics(text: &str) -> Vec<Sample> {
    text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).filter_map(parse_line).collect()
}

fn parse_line(line: &str) -> Option<Sample> {
    let (head, value) = line.rsplit_once(' ')?;
    let value = value.parse().ok()?;
    let (name, labels) = match head.split_once('{') {
        None => (head, BTreeMap::new()),
        Some((name, rest)) => (name, parse_labels(rest.strip_suffix('}')?)?),
    };
    Some(Sample { name: name.to_owned(), labels, value })
}

fn parse_labels(mut rest: &str) -> Option<BTreeMap<String, String>> {
    let mut labels = BTreeMap::new();
    while !rest.is_empty() {
        let (key, tail) = rest.split_once("=\"")?;
        let mut value = String::new();
        let mut chars = tail.char_indices();
        let end = loop {
            match chars.next()? {
                (_, '\\') => value.push(chars.next()?.1),
                (i, '"') => break i,
                (_, ch) => value.push(ch),
            }
        };
        labels.insert(key.to_owned(), value);
        rest = tail[end + 1..].strip_prefix(',').unwrap_or(&tail[end + 1..]);
    }
    Some(labels)
}
