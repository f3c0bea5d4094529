use crate::clock::Millis;
use crate::content::{AssetResolver, PresetRoom};
use crate::protocol::{PosePacket, Role, StateSnapshot, Transform};

use super::roles::{permits, Action};
use super::state::{
    EventRecord, InviteCode, Participant, RoomEvent, RoomState, SceneObject, MAX_DISPLAY_NAME,
    PALETTE_SIZE,
};
use super::SessionError;

pub const DEFAULT_PARTICIPANT_CAP: usize = 64;
pub const DEFAULT_ADMIN_GRACE_MS: Millis = 120_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoomConfig {
    pub participant_cap: usize,
    pub admin_grace_ms: Millis,
}

impl Default for RoomConfig {
    fn default() -> Self {
        Self { participant_cap: DEFAULT_PARTICIPANT_CAP, admin_grace_ms: DEFAULT_ADMIN_GRACE_MS }
    }
}

/// Credentials minted for a new room.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoomCredentials {
    pub room_id: String,
    pub admin_token: String,
    pub vr_code: InviteCode,
    pub guest_code: InviteCode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GrabOutcome {
    Granted(EventRecord),
    Denied { holder_id: Option<u16> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropReason {
    UnknownParticipant,
    UnknownObject,
    NotHolder,
    /// Avatar packet names someone other than the sender.
    Spoofed,
    /// Object packet on the avatar path or vice versa.
    WrongKind,
    RoomClosed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PoseOutcome {
    Accepted(EventRecord),
    Dropped(DropReason),
}

impl PoseOutcome {
    pub fn accepted(&self) -> bool {
        matches!(self, PoseOutcome::Accepted(_))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoseCounters {
    pub transforms_accepted: u64,
    pub transforms_dropped: u64,
    pub avatars_accepted: u64,
    pub avatars_dropped: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AudioRoute {
    pub from: u16,
    pub to: u16,
}

/// One live room: state plus the log that produced it. Every mutation goes
/// through `Room::commit`, so `replay(room.log()) == *room.state()` holds
/// at all times.
#[derive(Debug, Clone)]
pub struct Room {
    state: RoomState,
    log: Vec<EventRecord>,
    config: RoomConfig,
    counters: PoseCounters,
}

impl Room {
    pub fn open(credentials: RoomCredentials, preset: Option<&PresetRoom>, config: RoomConfig, now: Millis) -> Room {
        let objects = preset
            .map(|p| {
                p.objects
                    .iter()
                    .zip(1u16..)
                    .map(|(o, object_id)| SceneObject {
                        object_id,
                        asset_url: o.asset_url.clone(),
                        label: o.label.clone(),
                        transform: o.transform,
                        grabbable: true,
                        holder_id: None,
                    })
                    .collect()
            })
            .unwrap_or_default();
        let mut room = Room { state: RoomState::default(), log: Vec::new(), config, counters: PoseCounters::default() };
        room.commit(
            now,
            RoomEvent::RoomOpened {
                room_id: credentials.room_id,
                vr_code: credentials.vr_code,
                guest_code: credentials.guest_code,
                admin_token: credentials.admin_token,
                preset_id: preset.map(|p| p.preset_id.clone()),
                objects,
                admin_grace_deadline: now + config.admin_grace_ms,
            },
        );
        room
    }

    pub fn state(&self) -> &RoomState {
        &self.state
    }

    pub fn log(&self) -> &[EventRecord] {
        &self.log
    }

    pub fn config(&self) -> RoomConfig {
        self.config
    }

    pub fn counters(&self) -> PoseCounters {
        self.counters
    }

    pub fn room_id(&self) -> &str {
        &self.state.room_id
    }

    pub fn participant(&self, id: u16) -> Option<&Participant> {
        self.state.participants.get(&id)
    }

    pub fn snapshot(&self) -> StateSnapshot {
        self.state.snapshot()
    }

    fn commit(&mut self, at: Millis, event: RoomEvent) -> EventRecord {
        let record = EventRecord { seq: self.log.len() as u64, at, event };
        self.state.apply(&record).expect("room commands only commit valid events");
        self.log.push(record.clone());
        record
    }

    fn live(&self) -> Result<(), SessionError> {
        if self.state.is_closed() {
            Err(SessionError::RoomClosed)
        } else {
            Ok(())
        }
    }

    fn role_of(&self, participant_id: u16) -> Result<Role, SessionError> {
        self.participant(participant_id)
            .map(|p| p.role)
            .ok_or(SessionError::NoSuchParticipant(participant_id))
    }

    /// The role a code would grant, without joining.
    pub fn role_for_code(&self, code: &str) -> Option<Role> {
        if !self.state.admin_token.is_empty() && constant_time_eq(code.as_bytes(), self.state.admin_token.as_bytes()) {
            return Some(Role::Admin);
        }
        let code = InviteCode::parse(code)?;
        if Some(&code) == self.state.vr_code.as_ref() {
            Some(Role::VrActive)
        } else if Some(&code) == self.state.guest_code.as_ref() {
            Some(Role::Passive)
        } else {
            None
        }
    }

    pub fn join(&mut self, code: &str, display_name: &str, now: Millis) -> Result<(Participant, EventRecord), SessionError> {
        self.live()?;
        let role = self.role_for_code(code).ok_or(SessionError::BadCode)?;
        let display_name = display_name.trim();
        if display_name.is_empty() || display_name.chars().count() > MAX_DISPLAY_NAME {
            return Err(SessionError::InvalidDisplayName);
        }
        if role == Role::Admin && self.state.admin().is_some() {
            return Err(SessionError::AdminSeatTaken);
        }
        if self.state.participants.len() >= self.config.participant_cap {
            return Err(SessionError::RoomFull);
        }
        let participant = Participant {
            participant_id: self.free_participant_id().ok_or(SessionError::RoomFull)?,
            display_name: display_name.to_owned(),
            role,
            color_index: (self.state.joins % PALETTE_SIZE as u64) as u8,
            last_pose: None,
            last_seen: now,
        };
        let record = self.commit(now, RoomEvent::ParticipantJoined { participant: participant.clone() });
        Ok((participant, record))
    }

    fn free_participant_id(&self) -> Option<u16> {
        let start = self.state.next_participant_id;
        (0..=u16::MAX)
            .map(|k| start.wrapping_add(k))
            .find(|id| *id != 0 && !self.state.participants.contains_key(id))
    }

    fn free_object_id(&self) -> Option<u16> {
        let start = self.state.next_object_id;
        (0..=u16::MAX)
            .map(|k| start.wrapping_add(k))
            .find(|id| *id != 0 && !self.state.objects.contains_key(id))
    }

    /// First processed request wins; there is no queue.
    pub fn request_grab(&mut self, participant_id: u16, object_id: u16, now: Millis) -> Result<GrabOutcome, SessionError> {
        self.live()?;
        let role = self.role_of(participant_id)?;
        let object = self.state.objects.get(&object_id).ok_or(SessionError::NoSuchObject(object_id))?;
        let holder_id = object.holder_id;
        if !self.state.grab_enabled || !object.grabbable || !permits(role, Action::GrabObject) || holder_id.is_some() {
            return Ok(GrabOutcome::Denied { holder_id });
        }
        Ok(GrabOutcome::Granted(self.commit(now, RoomEvent::GrabGranted { object_id, holder_id: participant_id })))
    }

    pub fn release_grab(&mut self, participant_id: u16, object_id: u16, now: Millis) -> Result<EventRecord, SessionError> {
        self.live()?;
        let object = self.state.objects.get(&object_id).ok_or(SessionError::NoSuchObject(object_id))?;
        if object.holder_id != Some(participant_id) {
            return Err(SessionError::NotHolder { object_id, participant_id });
        }
        Ok(self.commit(now, RoomEvent::GrabReleased { object_id, holder_id: participant_id }))
    }

    /// Last writer wins among packets from the current holder; everything
    /// else is dropped and counted.
    pub fn apply_object_transform(&mut self, participant_id: u16, packet: &PosePacket, now: Millis) -> PoseOutcome {
        let outcome = self.object_transform(participant_id, packet, now);
        match outcome {
            PoseOutcome::Accepted(_) => self.counters.transforms_accepted += 1,
            PoseOutcome::Dropped(_) => self.counters.transforms_dropped += 1,
        }
        outcome
    }

    fn object_transform(&mut self, by: u16, packet: &PosePacket, now: Millis) -> PoseOutcome {
        let PosePacket::Object { object_id, transform } = *packet else {
            return PoseOutcome::Dropped(DropReason::WrongKind);
        };
        if self.state.is_closed() {
            return PoseOutcome::Dropped(DropReason::RoomClosed);
        }
        let Some(participant) = self.participant(by) else {
            return PoseOutcome::Dropped(DropReason::UnknownParticipant);
        };
        if !permits(participant.role, Action::TransformHeldObject) {
            return PoseOutcome::Dropped(DropReason::NotHolder);
        }
        match self.state.objects.get(&object_id) {
            None => PoseOutcome::Dropped(DropReason::UnknownObject),
            Some(o) if o.holder_id != Some(by) => PoseOutcome::Dropped(DropReason::NotHolder),
            Some(_) => PoseOutcome::Accepted(self.commit(now, RoomEvent::ObjectMoved { object_id, by, transform })),
        }
    }

    /// Any present participant may move their own avatar.
    pub fn apply_avatar_pose(&mut self, participant_id: u16, packet: &PosePacket, now: Millis) -> PoseOutcome {
        let outcome = self.avatar_pose(participant_id, packet, now);
        match outcome {
            PoseOutcome::Accepted(_) => self.counters.avatars_accepted += 1,
            PoseOutcome::Dropped(_) => self.counters.avatars_dropped += 1,
        }
        outcome
    }

    fn avatar_pose(&mut self, sender: u16, packet: &PosePacket, now: Millis) -> PoseOutcome {
        let PosePacket::Avatar { participant_id, pose } = *packet else {
            return PoseOutcome::Dropped(DropReason::WrongKind);
        };
        if self.state.is_closed() {
            return PoseOutcome::Dropped(DropReason::RoomClosed);
        }
        if participant_id != sender {
            return PoseOutcome::Dropped(DropReason::Spoofed);
        }
        if self.participant(sender).is_none() {
            return PoseOutcome::Dropped(DropReason::UnknownParticipant);
        }
        PoseOutcome::Accepted(self.commit(now, RoomEvent::AvatarMoved { participant_id, pose }))
    }

    /// Disabling releases every held object first, one event per object.
    pub fn set_grab_enabled(&mut self, participant_id: u16, enabled: bool, now: Millis) -> Result<Vec<EventRecord>, SessionError> {
        self.live()?;
        let role = self.role_of(participant_id)?;
        if !permits(role, Action::SetGrabEnabled) {
            return Err(SessionError::PermissionDenied(Action::SetGrabEnabled));
        }
        let mut events = Vec::new();
        if !enabled {
            let held: Vec<(u16, u16)> = self
                .state
                .objects
                .values()
                .filter_map(|o| o.holder_id.map(|h| (o.object_id, h)))
                .collect();
            for (object_id, holder_id) in held {
                events.push(self.commit(now, RoomEvent::GrabReleased { object_id, holder_id }));
            }
        }
        events.push(self.commit(now, RoomEvent::GrabEnabledSet { enabled }));
        Ok(events)
    }

    pub fn add_object(
        &mut self,
        participant_id: u16,
        asset_url: &str,
        label: &str,
        initial: Transform,
        resolver: &dyn AssetResolver,
        now: Millis,
    ) -> Result<(SceneObject, EventRecord), SessionError> {
        self.live()?;
        let role = self.role_of(participant_id)?;
        if !permits(role, Action::AddObject) {
            return Err(SessionError::PermissionDenied(Action::AddObject));
        }
        let transform = initial.checked().map_err(|e| SessionError::InvalidAsset(format!("initial transform: {e}")))?;
        resolver.check(asset_url).map_err(|e| SessionError::InvalidAsset(e.to_string()))?;
        let object = SceneObject {
            object_id: self.free_object_id().ok_or_else(|| SessionError::InvalidAsset("room has no free object ids".into()))?,
            asset_url: asset_url.to_owned(),
            label: label.to_owned(),
            transform,
            grabbable: true,
            holder_id: None,
        };
        let record = self.commit(now, RoomEvent::ObjectAdded { object: object.clone() });
        Ok((object, record))
    }

    /// Removing a held object releases it first.
    pub fn remove_object(&mut self, participant_id: u16, object_id: u16, now: Millis) -> Result<Vec<EventRecord>, SessionError> {
        self.live()?;
        let role = self.role_of(participant_id)?;
        if !permits(role, Action::RemoveObject) {
            return Err(SessionError::PermissionDenied(Action::RemoveObject));
        }
        let object = self.state.objects.get(&object_id).ok_or(SessionError::NoSuchObject(object_id))?;
        let mut events = Vec::new();
        if let Some(holder_id) = object.holder_id {
            events.push(self.commit(now, RoomEvent::GrabReleased { object_id, holder_id }));
        }
        events.push(self.commit(now, RoomEvent::ObjectRemoved { object_id }));
        Ok(events)
    }

    /// Releases the participant's locks, removes them and, for the Admin,
    /// starts the grace period.
    pub fn handle_disconnect(&mut self, participant_id: u16, now: Millis) -> Result<Vec<EventRecord>, SessionError> {
        let participant = self.participant(participant_id).ok_or(SessionError::NoSuchParticipant(participant_id))?.clone();
        if self.state.is_closed() {
            return Ok(Vec::new());
        }
        let held: Vec<u16> = self
            .state
            .objects
            .values()
            .filter(|o| o.holder_id == Some(participant_id))
            .map(|o| o.object_id)
            .collect();
        let mut events: Vec<EventRecord> = held
            .into_iter()
            .map(|object_id| self.commit(now, RoomEvent::GrabReleased { object_id, holder_id: participant_id }))
            .collect();
        events.push(self.commit(now, RoomEvent::ParticipantLeft { participant: participant.info() }));
        if participant.role == Role::Admin {
            events.push(self.commit(now, RoomEvent::AdminGraceStarted { deadline: now + self.config.admin_grace_ms }));
        }
        Ok(events)
    }

    pub fn route_audio_signal(&self, from: u16, to: u16) -> Result<AudioRoute, SessionError> {
        self.live()?;
        let role = self.role_of(from)?;
        self.role_of(to)?;
        if !permits(role, Action::SendAudio) {
            return Err(SessionError::PermissionDenied(Action::SendAudio));
        }
        Ok(AudioRoute { from, to })
    }

    /// Closes the room if the Admin grace period has run out.
    pub fn expire(&mut self, now: Millis) -> Option<EventRecord> {
        match self.state.admin_grace_deadline {
            Some(deadline) if now >= deadline && self.state.admin().is_none() && !self.state.is_closed() => {
                Some(self.commit(now, RoomEvent::RoomClosed { reason: "admin did not return".into() }))
            }
            _ => None,
        }
    }

    pub fn close(&mut self, reason: &str, now: Millis) -> Option<EventRecord> {
        if self.state.is_closed() {
            return None;
        }
        Some(self.commit(now, RoomEvent::RoomClosed { reason: reason.to_owned() }))
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}
