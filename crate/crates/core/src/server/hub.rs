//! Transport-free core of the sync server. The websocket layer feeds frames
//! in and drains [`Connection`] outboxes; tests drive the same API directly
//! with a manual clock.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::Serialize;

use super::connection::{Binding, Connection, CLOSE_GOING_AWAY, CLOSE_NORMAL, CLOSE_POLICY, SLOW_CONSUMER};
use super::metrics::HubCounters;
use super::ServerError;
use crate::clock::{Clock, Millis};
use crate::content::{AcceptAll, AssetResolver, PresetRoom};
use crate::protocol::{
    decode_control, decode_pose, encode_pose, Control, ControlError, PosePacket, Subject,
};
use crate::session::{
    CodeBook, EventRecord, GrabOutcome, LobbyConfig, PoseOutcome, Room, RoomEvent, RoomState,
    SessionError,
};

pub const DEFAULT_TICK_HZ: u32 = 20;
pub const DEFAULT_HEARTBEAT_TIMEOUT_MS: Millis = 15_000;
pub const HEARTBEAT_INTERVAL_MS: Millis = 5_000;
pub const DEFAULT_OUTBOX_LIMIT: usize = 256 * 1024;
pub const MALFORMED_CONTROL_LIMIT: u32 = 3;
pub const DEFAULT_SETTLE_TICKS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HubConfig {
    pub tick_hz: u32,
    pub heartbeat_timeout_ms: Millis,
    pub outbox_limit: usize,
    pub malformed_limit: u32,
    /// Ticks a pose is repeated after its subject stops changing, so that
    /// receivers who lost the last packet still converge.
    pub settle_ticks: u32,
    pub lobby: LobbyConfig,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self {
            tick_hz: DEFAULT_TICK_HZ,
            heartbeat_timeout_ms: DEFAULT_HEARTBEAT_TIMEOUT_MS,
            outbox_limit: DEFAULT_OUTBOX_LIMIT,
            malformed_limit: MALFORMED_CONTROL_LIMIT,
            settle_ticks: DEFAULT_SETTLE_TICKS,
            lobby: LobbyConfig::default(),
        }
    }
}

#[derive(Debug)]
struct Pending {
    packet: Vec<u8>,
    sender: u16,
    fresh: bool,
    resends_left: u32,
}

#[derive(Debug)]
pub(crate) struct RoomSlot {
    pub(crate) room: Room,
    pub(crate) members: BTreeMap<u16, Arc<Connection>>,
    pending: BTreeMap<Subject, Pending>,
    pub(crate) coalesced: u64,
    logged: usize,
}

#[derive(Serialize)]
struct LoggedEvent<'a> {
    room_id: &'a str,
    #[serde(flatten)]
    record: &'a EventRecord,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct TickReport {
    pub packets_sent: u64,
    pub subjects: u64,
}

pub struct Hub {
    config: HubConfig,
    clock: Arc<dyn Clock>,
    codes: Mutex<CodeBook>,
    rooms: RwLock<BTreeMap<String, Arc<Mutex<RoomSlot>>>>,
    connections: RwLock<BTreeMap<u64, Arc<Connection>>>,
    next_connection: AtomicU64,
    presets: Vec<PresetRoom>,
    resolver: Arc<dyn AssetResolver + Send + Sync>,
    event_log: Option<Mutex<BufWriter<File>>>,
    shutting_down: AtomicBool,
    pub(crate) counters: HubCounters,
}

impl std::fmt::Debug for Hub {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hub").field("config", &self.config).field("rooms", &self.room_count()).finish()
    }
}

impl Hub {
    pub fn new(config: HubConfig, clock: Arc<dyn Clock>) -> Self {
        Self {
            config,
            clock,
            codes: Mutex::new(CodeBook::new()),
            rooms: RwLock::new(BTreeMap::new()),
            connections: RwLock::new(BTreeMap::new()),
            next_connection: AtomicU64::new(1),
            presets: Vec::new(),
            resolver: Arc::new(AcceptAll),
            event_log: None,
            shutting_down: AtomicBool::new(false),
            counters: HubCounters::default(),
        }
    }

    pub fn with_presets(mut self, presets: Vec<PresetRoom>) -> Self {
        self.presets = presets;
        self
    }

    pub fn with_resolver(mut self, resolver: Arc<dyn AssetResolver + Send + Sync>) -> Self {
        self.resolver = resolver;
        self
    }

    pub fn with_codebook(mut self, codes: CodeBook) -> Self {
        self.codes = Mutex::new(codes);
        self
    }

    /// Mirrors every committed event to `path` as newline-delimited JSON.
    pub fn with_event_log(mut self, path: &Path) -> Result<Self, ServerError> {
        let file = File::options()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ServerError::BadConfig(format!("event log {}: {e}", path.display())))?;
        self.event_log = Some(Mutex::new(BufWriter::new(file)));
        Ok(self)
    }

    pub fn config(&self) -> HubConfig {
        self.config
    }

    pub fn now(&self) -> Millis {
        self.clock.now_ms()
    }

    pub fn presets(&self) -> &[PresetRoom] {
        &self.presets
    }

    pub fn room_count(&self) -> usize {
        self.rooms.read().len()
    }

    pub fn room_ids(&self) -> Vec<String> {
        self.rooms.read().keys().cloned().collect()
    }

    pub fn connection_count(&self) -> usize {
        self.connections.read().len()
    }

    pub fn connection(&self, id: u64) -> Option<Arc<Connection>> {
        self.connections.read().get(&id).cloned()
    }

    fn slot(&self, room_id: &str) -> Option<Arc<Mutex<RoomSlot>>> {
        self.rooms.read().get(room_id).cloned()
    }

    pub(crate) fn slots(&self) -> Vec<(String, Arc<Mutex<RoomSlot>>)> {
        self.rooms.read().iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    pub(crate) fn connections(&self) -> Vec<Arc<Connection>> {
        self.connections.read().values().cloned().collect()
    }

    pub fn room_state(&self, room_id: &str) -> Option<RoomState> {
        self.slot(room_id).map(|s| s.lock().room.state().clone())
    }

    pub fn room_log(&self, room_id: &str) -> Option<Vec<EventRecord>> {
        self.slot(room_id).map(|s| s.lock().room.log().to_vec())
    }

    /// Room administered by `token`, if it is live.
    pub fn room_for_admin_token(&self, token: &str) -> Option<String> {
        self.codes.lock().room_for_token(token).map(str::to_owned)
    }

    pub fn is_shutting_down(&self) -> bool {
        self.shutting_down.load(Ordering::Acquire)
    }

    /// Registers a new connection and greets it.
    pub fn connect(&self) -> Arc<Connection> {
        let id = self.next_connection.fetch_add(1, Ordering::Relaxed);
        let conn = Arc::new(Connection::new(id, self.config.outbox_limit, self.now()));
        self.counters.connections_opened.fetch_add(1, Ordering::Relaxed);
        if self.is_shutting_down() {
            conn.send_control(Control::error("room_closed", "server shutting down"));
            conn.close(CLOSE_GOING_AWAY, "shutdown");
            return conn;
        }
        self.connections.write().insert(id, conn.clone());
        conn.send_control(Control::Hello { connection_id: id });
        conn
    }

    /// Creates a room directly, as the `CreateRoom` message does.
    pub fn create_room(&self, preset_id: Option<&str>) -> Result<crate::session::RoomCredentials, Control> {
        let preset = match preset_id {
            Some(id) => Some(
                self.presets
                    .iter()
                    .find(|p| p.preset_id == id)
                    .ok_or_else(|| Control::error("unknown_preset", format!("no preset `{id}`")))?,
            ),
            None => None,
        };
        let mut codes = self.codes.lock();
        let mut rooms = self.rooms.write();
        if rooms.len() >= self.config.lobby.max_rooms {
            let e = SessionError::ServerFull;
            return Err(Control::error(e.code(), e.to_string()));
        }
        let credentials = codes.allocate();
        let room = Room::open(credentials.clone(), preset, self.config.lobby.room, self.now());
        let mut slot = RoomSlot { room, members: BTreeMap::new(), pending: BTreeMap::new(), coalesced: 0, logged: 0 };
        self.persist(&mut slot);
        rooms.insert(credentials.room_id.clone(), Arc::new(Mutex::new(slot)));
        self.counters.rooms_created.fetch_add(1, Ordering::Relaxed);
        Ok(credentials)
    }

    pub fn ingest_text(&self, conn: &Arc<Connection>, frame: &[u8]) {
        conn.record_ingress_control(frame.len());
        let message = match decode_control(frame) {
            Ok(m) => m,
            Err(e) => return self.malformed_control(conn, &e),
        };
        let now = self.now();
        conn.touch(now);
        let mut casualties = Vec::new();
        match message.body {
            Control::Heartbeat => {}
            Control::CreateRoom { preset_id } => {
                let reply = match self.create_room(preset_id.as_deref()) {
                    Ok(c) => Control::RoomCreated {
                        room_id: c.room_id,
                        admin_token: c.admin_token,
                        vr_code: c.vr_code.to_string(),
                        guest_code: c.guest_code.to_string(),
                    },
                    Err(e) => e,
                };
                conn.send_control(reply);
            }
            Control::JoinRoom { room_id, code, display_name } => {
                self.join(conn, room_id.as_deref(), &code, &display_name, now, &mut casualties)
            }
            body @ (Control::AddObject { .. }
            | Control::RemoveObject { .. }
            | Control::SetGrabEnabled { .. }
            | Control::GrabRequest { .. }
            | Control::GrabRelease { .. }
            | Control::AudioSignal { .. }) => self.member_command(conn, body, now, &mut casualties),
            other => {
                conn.send_control(Control::error("unexpected_kind", format!("clients may not send {}", other.kind())));
            }
        }
        self.reap(casualties);
    }

    fn malformed_control(&self, conn: &Arc<Connection>, error: &ControlError) {
        self.counters.malformed_control.fetch_add(1, Ordering::Relaxed);
        let code = match error {
            ControlError::Malformed(_) => "malformed",
            ControlError::UnknownKind(_) => "unknown_kind",
            ControlError::VersionMismatch(_) => "version_mismatch",
        };
        conn.send_control(Control::error(code, error.to_string()));
        if conn.note_malformed_control() >= self.config.malformed_limit {
            conn.close(CLOSE_POLICY, "too many malformed messages");
            self.disconnect(conn);
        }
    }

    fn join(
        &self,
        conn: &Arc<Connection>,
        room_id: Option<&str>,
        code: &str,
        display_name: &str,
        now: Millis,
        casualties: &mut Vec<Arc<Connection>>,
    ) {
        let reject = |e: SessionError| {
            conn.send_control(Control::JoinRejected { reason: e.code().to_owned() });
        };
        if conn.binding().is_some() {
            conn.send_control(Control::error("already_joined", "connection is already in a room"));
            return;
        }
        let room_id = match room_id {
            Some(id) => id.to_owned(),
            None => match self.codes.lock().room_for_invite(code) {
                Some(id) => id.to_owned(),
                None => return reject(SessionError::BadCode),
            },
        };
        let Some(slot) = self.slot(&room_id) else {
            return reject(SessionError::BadCode);
        };
        let mut slot = slot.lock();
        let (participant, record) = match slot.room.join(code, display_name, now) {
            Ok(joined) => joined,
            Err(e) => return reject(e),
        };
        let id = participant.participant_id;
        conn.bind(Binding { room_id: room_id.clone(), participant_id: id });
        conn.send_control(Control::JoinAccepted {
            participant_id: id,
            role: participant.role,
            color_index: participant.color_index,
            snapshot: slot.room.snapshot(),
        });
        for packet in slot.room.state().bootstrap_poses() {
            conn.send_pose(&encode_pose(&packet));
        }
        slot.members.insert(id, conn.clone());
        announce(&mut slot, std::slice::from_ref(&record), casualties);
        self.persist(&mut slot);
    }

    fn member_command(&self, conn: &Arc<Connection>, body: Control, now: Millis, casualties: &mut Vec<Arc<Connection>>) {
        let Some(Binding { room_id, participant_id: me }) = conn.binding() else {
            conn.send_control(Control::error("not_joined", format!("join a room before sending {}", body.kind())));
            return;
        };
        let Some(slot) = self.slot(&room_id) else {
            conn.send_control(Control::error("room_closed", "room no longer exists"));
            return;
        };
        let mut slot = slot.lock();
        let result: Result<Vec<EventRecord>, SessionError> = match body {
            Control::AddObject { asset_url, label, initial_transform, .. } => slot
                .room
                .add_object(me, &asset_url, &label, initial_transform, self.resolver.as_ref(), now)
                .map(|(_, record)| vec![record]),
            Control::RemoveObject { object_id } => slot.room.remove_object(me, object_id, now),
            Control::SetGrabEnabled { enabled } => slot.room.set_grab_enabled(me, enabled, now),
            Control::GrabRequest { object_id } => match slot.room.request_grab(me, object_id, now) {
                Ok(GrabOutcome::Granted(record)) => Ok(vec![record]),
                Ok(GrabOutcome::Denied { holder_id }) => {
                    conn.send_control(Control::GrabDenied { object_id, holder_id });
                    Ok(Vec::new())
                }
                Err(e) => Err(e),
            },
            Control::GrabRelease { object_id } => slot.room.release_grab(me, object_id, now).map(|r| vec![r]),
            Control::AudioSignal { to_participant, payload, .. } => {
                match slot.room.route_audio_signal(me, to_participant) {
                    Ok(route) => {
                        if let Some(target) = slot.members.get(&route.to) {
                            let forwarded = Control::AudioSignal { to_participant, from_participant: Some(me), payload };
                            if !target.send_control(forwarded) {
                                casualties.push(target.clone());
                            }
                        }
                        Ok(Vec::new())
                    }
                    Err(e) => Err(e),
                }
            }
            _ => unreachable!("filtered by ingest_text"),
        };
        match result {
            Ok(records) => announce(&mut slot, &records, casualties),
            Err(e) => {
                conn.send_control(Control::error(e.code(), e.to_string()));
            }
        }
        self.persist(&mut slot);
    }

    pub fn ingest_binary(&self, conn: &Arc<Connection>, frame: &[u8]) {
        conn.record_ingress_pose(frame.len());
        let packet = match decode_pose(frame) {
            Ok(p) => p,
            Err(_) => {
                conn.counters.malformed_pose.fetch_add(1, Ordering::Relaxed);
                self.counters.malformed_pose.fetch_add(1, Ordering::Relaxed);
                return;
            }
        };
        let Some(Binding { room_id, participant_id }) = conn.binding() else {
            self.counters.pose_unbound.fetch_add(1, Ordering::Relaxed);
            return;
        };
        let now = self.now();
        conn.touch(now);
        let Some(slot) = self.slot(&room_id) else { return };
        let mut slot = slot.lock();
        let outcome = match packet {
            PosePacket::Object { .. } => slot.room.apply_object_transform(participant_id, &packet, now),
            PosePacket::Avatar { .. } => slot.room.apply_avatar_pose(participant_id, &packet, now),
        };
        match outcome {
            PoseOutcome::Accepted(_) => {
                self.counters.pose_accepted.fetch_add(1, Ordering::Relaxed);
                let fresh = Pending { packet: encode_pose(&packet), sender: participant_id, fresh: true, resends_left: self.config.settle_ticks };
                if let Some(superseded) = slot.pending.insert(packet.subject(), fresh) {
                    if superseded.fresh {
                        slot.coalesced += 1;
                        self.counters.pose_coalesced.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
            PoseOutcome::Dropped(_) => {
                self.counters.pose_rejected.fetch_add(1, Ordering::Relaxed);
            }
        }
        self.persist(&mut slot);
    }

    /// One broadcast tick: every subject that changed since the last tick is
    /// sent once to every member except its sender; settled subjects are
    /// repeated for a few more ticks and then forgotten.
    pub fn tick(&self) -> TickReport {
        let mut report = TickReport::default();
        for (_, slot) in self.slots() {
            let mut slot = slot.lock();
            let RoomSlot { pending, members, .. } = &mut *slot;
            pending.retain(|_, p| {
                if !p.fresh && p.resends_left == 0 {
                    return false;
                }
                if p.fresh {
                    p.fresh = false;
                } else {
                    p.resends_left -= 1;
                }
                report.subjects += 1;
                for (id, conn) in members.iter() {
                    if *id != p.sender && conn.send_pose(&p.packet) {
                        report.packets_sent += 1;
                    }
                }
                true
            });
        }
        self.counters.ticks.fetch_add(1, Ordering::Relaxed);
        report
    }

    /// Closes connections silent for the heartbeat timeout or longer,
    /// releasing whatever they held. Returns the closed connection ids.
    pub fn heartbeat_sweep(&self, now: Millis) -> Vec<u64> {
        let stale: Vec<Arc<Connection>> = self
            .connections()
            .into_iter()
            .filter(|c| now.saturating_sub(c.last_heartbeat()) >= self.config.heartbeat_timeout_ms)
            .collect();
        let ids = stale.iter().map(|c| c.id()).collect();
        for conn in stale {
            self.counters.heartbeat_disconnects.fetch_add(1, Ordering::Relaxed);
            conn.close(CLOSE_GOING_AWAY, "heartbeat_timeout");
            self.disconnect(&conn);
        }
        ids
    }

    /// Closes rooms whose Admin grace period has run out. Every member gets
    /// `Error{room_closed}` before its socket is closed.
    pub fn expire_rooms(&self, now: Millis) -> Vec<String> {
        let mut closed = Vec::new();
        for (id, slot) in self.slots() {
            let mut guard = slot.lock();
            if let Some(record) = guard.room.expire(now) {
                self.finish_room(&mut guard, record);
                closed.push(id);
            }
        }
        self.remove_rooms(&closed);
        closed
    }

    /// Closes every room and stops accepting connections.
    pub fn shutdown(&self, reason: &str) {
        self.shutting_down.store(true, Ordering::Release);
        let now = self.now();
        let mut closed = Vec::new();
        for (id, slot) in self.slots() {
            let mut guard = slot.lock();
            if let Some(record) = guard.room.close(reason, now) {
                self.finish_room(&mut guard, record);
            }
            closed.push(id);
        }
        self.remove_rooms(&closed);
        for conn in self.connections() {
            conn.close(CLOSE_GOING_AWAY, "shutdown");
        }
    }

    fn finish_room(&self, slot: &mut RoomSlot, record: EventRecord) {
        let mut casualties = Vec::new();
        announce(slot, std::slice::from_ref(&record), &mut casualties);
        for conn in slot.members.values() {
            conn.unbind();
            conn.close(CLOSE_NORMAL, "room_closed");
        }
        slot.members.clear();
        slot.pending.clear();
        self.persist(slot);
    }

    fn remove_rooms(&self, ids: &[String]) {
        if ids.is_empty() {
            return;
        }
        let mut codes = self.codes.lock();
        let mut rooms = self.rooms.write();
        for id in ids {
            codes.release(id);
            if rooms.remove(id).is_some() {
                self.counters.rooms_closed.fetch_add(1, Ordering::Relaxed);
            }
        }
    }

    /// Forgets a connection, releasing its locks and announcing its
    /// departure. Safe to call more than once.
    pub fn disconnect(&self, conn: &Arc<Connection>) {
        if self.connections.write().remove(&conn.id()).is_some() {
            self.counters.retire(conn);
        }
        let Some(Binding { room_id, participant_id }) = conn.unbind() else { return };
        let Some(slot) = self.slot(&room_id) else { return };
        let mut casualties = Vec::new();
        {
            let mut slot = slot.lock();
            slot.members.remove(&participant_id);
            slot.pending.remove(&Subject::Avatar(participant_id));
            if let Ok(records) = slot.room.handle_disconnect(participant_id, self.now()) {
                announce(&mut slot, &records, &mut casualties);
            }
            self.persist(&mut slot);
        }
        self.reap(casualties);
    }

    fn reap(&self, casualties: Vec<Arc<Connection>>) {
        for conn in casualties {
            if conn.close_reason().as_deref() == Some(SLOW_CONSUMER) && conn.binding().is_some() {
                self.counters.slow_consumer_disconnects.fetch_add(1, Ordering::Relaxed);
            }
            self.disconnect(&conn);
        }
    }

    fn persist(&self, slot: &mut RoomSlot) {
        let log = slot.room.log();
        if let Some(file) = &self.event_log {
            let mut file = file.lock();
            for record in &log[slot.logged..] {
                let line = LoggedEvent { room_id: slot.room.room_id(), record };
                if let Err(e) = serde_json::to_writer(&mut *file, &line).map_err(std::io::Error::from).and_then(|_| file.write_all(b"\n")) {
                    tracing::warn!(error = %e, "event log write failed");
                }
            }
            let _ = file.flush();
        }
        slot.logged = log.len();
    }
}

/// Sends each record's announcement to every member, except that a joiner
/// learns about itself from `JoinAccepted` instead.
fn announce(slot: &mut RoomSlot, records: &[EventRecord], casualties: &mut Vec<Arc<Connection>>) {
    for record in records {
        let Some(body) = record.event.announcement() else { continue };
        let skip = match &record.event {
            RoomEvent::ParticipantJoined { participant } => Some(participant.participant_id),
            _ => None,
        };
        for (id, conn) in &slot.members {
            if Some(*id) != skip && !conn.send_control(body.clone()) {
                casualties.push(conn.clone());
            }
        }
        if let RoomEvent::ParticipantLeft { participant } = &record.event {
            slot.pending.remove(&Subject::Avatar(participant.participant_id));
        }
        if let RoomEvent::ObjectRemoved { object_id } = &record.event {
            slot.pending.remove(&Subject::Object(*object_id));
        }
    }
}
