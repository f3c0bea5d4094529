//! Room state as a pure fold over an append-only event log.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Millis;
use crate::protocol::{
    AvatarPose, Control, ObjectRecord, ParticipantInfo, PosePacket, Role, StateSnapshot, Transform,
};

/// Palette size for participant colors.
pub const PALETTE_SIZE: u8 = 8;
pub const MAX_DISPLAY_NAME: usize = 64;

/// Six symbols from an alphabet without the look-alikes I, O, 0 and 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InviteCode(String);

impl InviteCode {
    pub const ALPHABET: &'static [u8; 32] = b"ABCDEFGHJKLMNPQRSTUVWXYZ23456789";
    pub const LEN: usize = 6;
    /// Well-formed but never issued.
    pub const RESERVED: &'static str = "AAAAAA";

    /// Accepts user input case-insensitively, ignoring surrounding space.
    pub fn parse(raw: &str) -> Option<Self> {
        let code = raw.trim().to_ascii_uppercase();
        let ok = code.len() == Self::LEN && code.bytes().all(|b| Self::ALPHABET.contains(&b));
        ok.then_some(InviteCode(code))
    }

    pub fn generate<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let code: String = (0..Self::LEN)
                .map(|_| Self::ALPHABET[rng.random_range(0..Self::ALPHABET.len())] as char)
                .collect();
            if code != Self::RESERVED {
                return InviteCode(code);
            }
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for InviteCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub participant_id: u16,
    pub display_name: String,
    pub role: Role,
    pub color_index: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_pose: Option<AvatarPose>,
    pub last_seen: Millis,
}

impl Participant {
    pub fn info(&self) -> ParticipantInfo {
        ParticipantInfo {
            participant_id: self.participant_id,
            display_name: self.display_name.clone(),
            role: self.role,
            color_index: self.color_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub object_id: u16,
    pub asset_url: String,
    pub label: String,
    pub transform: Transform,
    pub grabbable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder_id: Option<u16>,
}

impl SceneObject {
    pub fn record(&self) -> ObjectRecord {
        ObjectRecord {
            object_id: self.object_id,
            asset_url: self.asset_url.clone(),
            label: self.label.clone(),
            transform: self.transform,
            grabbable: self.grabbable,
            holder_id: self.holder_id,
        }
    }
}

/// Authoritative room state. All transforms share one room-fixed frame, so
/// co-located participants who align their physical play areas see each
/// other where they really stand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomState {
    pub room_id: String,
    pub vr_code: Option<InviteCode>,
    pub guest_code: Option<InviteCode>,
    pub admin_token: String,
    pub preset_id: Option<String>,
    pub grab_enabled: bool,
    pub objects: BTreeMap<u16, SceneObject>,
    pub participants: BTreeMap<u16, Participant>,
    pub created_at: Millis,
    /// Set while the room has no Admin; the room closes when it passes.
    pub admin_grace_deadline: Option<Millis>,
    pub closed: Option<String>,
    pub next_participant_id: u16,
    pub next_object_id: u16,
    /// Total joins so far; drives round-robin color assignment.
    pub joins: u64,
}

impl Default for RoomState {
    fn default() -> Self {
        Self {
            room_id: String::new(),
            vr_code: None,
            guest_code: None,
            admin_token: String::new(),
            preset_id: None,
            grab_enabled: true,
            objects: BTreeMap::new(),
            participants: BTreeMap::new(),
            created_at: 0,
            admin_grace_deadline: None,
            closed: None,
            next_participant_id: 1,
            next_object_id: 1,
            joins: 0,
        }
    }
}

/// State transitions. Commands are validated by [`super::Room`] before an
/// event is committed; the fold re-checks invariants so that replaying a
/// tampered or incomplete log fails loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RoomEvent {
    RoomOpened {
        room_id: String,
        vr_code: InviteCode,
        guest_code: InviteCode,
        admin_token: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset_id: Option<String>,
        objects: Vec<SceneObject>,
        admin_grace_deadline: Millis,
    },
    ParticipantJoined { participant: Participant },
    ParticipantLeft { participant: ParticipantInfo },
    AdminGraceStarted { deadline: Millis },
    ObjectAdded { object: SceneObject },
    ObjectRemoved { object_id: u16 },
    GrabEnabledSet { enabled: bool },
    GrabGranted { object_id: u16, holder_id: u16 },
    GrabReleased { object_id: u16, holder_id: u16 },
    ObjectMoved { object_id: u16, by: u16, transform: Transform },
    AvatarMoved { participant_id: u16, pose: AvatarPose },
    RoomClosed { reason: String },
}

impl RoomEvent {
    /// The control message this event is announced with, if any. Pose
    /// events travel on the pose plane instead.
    pub fn announcement(&self) -> Option<Control> {
        Some(match self {
            RoomEvent::ParticipantJoined { participant } => {
                Control::ParticipantJoined { participant: participant.info() }
            }
            RoomEvent::ParticipantLeft { participant } => {
                Control::ParticipantLeft { participant: participant.clone() }
            }
            RoomEvent::ObjectAdded { object } => Control::AddObject {
                object_id: Some(object.object_id),
                asset_url: object.asset_url.clone(),
                label: object.label.clone(),
                initial_transform: object.transform,
            },
            RoomEvent::ObjectRemoved { object_id } => Control::RemoveObject { object_id: *object_id },
            RoomEvent::GrabEnabledSet { enabled } => Control::SetGrabEnabled { enabled: *enabled },
            RoomEvent::GrabGranted { object_id, holder_id } => {
                Control::GrabGranted { object_id: *object_id, holder_id: *holder_id }
            }
            RoomEvent::GrabReleased { object_id, .. } => Control::GrabRelease { object_id: *object_id },
            RoomEvent::RoomClosed { reason } => Control::error("room_closed", reason.clone()),
            RoomEvent::RoomOpened { .. }
            | RoomEvent::AdminGraceStarted { .. }
            | RoomEvent::ObjectMoved { .. }
            | RoomEvent::AvatarMoved { .. } => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub at: Millis,
    pub event: RoomEvent,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("corrupt event log at seq {seq}: {detail}")]
    CorruptLog { seq: u64, detail: String },
}

impl RoomState {
    pub fn admin(&self) -> Option<&Participant> {
        self.participants.values().find(|p| p.role == Role::Admin)
    }

    pub fn is_closed(&self) -> bool {
        self.closed.is_some()
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            grab_enabled: self.grab_enabled,
            objects: self.objects.values().map(SceneObject::record).collect(),
            participants: self.participants.values().map(Participant::info).collect(),
        }
    }

    /// Latest avatar poses, sent on the pose plane right after a snapshot so
    /// a joiner sees everyone where they stand.
    pub fn bootstrap_poses(&self) -> Vec<PosePacket> {
        self.participants
            .values()
            .filter_map(|p| p.last_pose.map(|pose| PosePacket::Avatar { participant_id: p.participant_id, pose }))
            .collect()
    }

    /// Folds one record into the state.
    pub fn apply(&mut self, record: &EventRecord) -> Result<(), ReplayError> {
        let fail = |detail: String| Err(ReplayError::CorruptLog { seq: record.seq, detail });
        if self.closed.is_some() {
            return fail("event after room closed".into());
        }
        match &record.event {
            RoomEvent::RoomOpened { room_id, vr_code, guest_code, admin_token, preset_id, objects, admin_grace_deadline } => {
                if record.seq != 0 || !self.room_id.is_empty() {
                    return fail("room opened twice".into());
                }
                if vr_code == guest_code {
                    return fail("invite codes must differ".into());
                }
                *self = RoomState {
                    room_id: room_id.clone(),
                    vr_code: Some(vr_code.clone()),
                    guest_code: Some(guest_code.clone()),
                    admin_token: admin_token.clone(),
                    preset_id: preset_id.clone(),
                    created_at: record.at,
                    admin_grace_deadline: Some(*admin_grace_deadline),
                    ..RoomState::default()
                };
                for object in objects {
                    self.insert_object(object.clone()).or_else(fail)?;
                }
            }
            RoomEvent::ParticipantJoined { participant } => {
                let id = participant.participant_id;
                if self.participants.contains_key(&id) {
                    return fail(format!("participant {id} joined twice"));
                }
                if participant.role == Role::Admin {
                    if self.admin().is_some() {
                        return fail("second admin".into());
                    }
                    self.admin_grace_deadline = None;
                }
                let mut participant = participant.clone();
                participant.last_seen = record.at;
                self.participants.insert(id, participant);
                self.next_participant_id = self.next_participant_id.max(id.wrapping_add(1));
                self.joins += 1;
            }
            RoomEvent::ParticipantLeft { participant } => {
                let id = participant.participant_id;
                if self.participants.remove(&id).is_none() {
                    return fail(format!("participant {id} left but was not present"));
                }
                if self.objects.values().any(|o| o.holder_id == Some(id)) {
                    return fail(format!("participant {id} left while holding an object"));
                }
            }
            RoomEvent::AdminGraceStarted { deadline } => {
                if self.admin().is_some() {
                    return fail("grace period while an admin is present".into());
                }
                self.admin_grace_deadline = Some(*deadline);
            }
            RoomEvent::ObjectAdded { object } => self.insert_object(object.clone()).or_else(fail)?,
            RoomEvent::ObjectRemoved { object_id } => match self.objects.get(object_id) {
                Some(o) if o.holder_id.is_none() => {
                    self.objects.remove(object_id);
                }
                Some(_) => return fail(format!("object {object_id} removed while held")),
                None => return fail(format!("object {object_id} removed but absent")),
            },
            RoomEvent::GrabEnabledSet { enabled } => {
                if !enabled && self.objects.values().any(|o| o.holder_id.is_some()) {
                    return fail("grabbing disabled while objects are held".into());
                }
                self.grab_enabled = *enabled;
            }
            RoomEvent::GrabGranted { object_id, holder_id } => {
                let role = self.participants.get(holder_id).map(|p| p.role);
                if !matches!(role, Some(Role::Admin | Role::VrActive)) {
                    return fail(format!("grant to {holder_id} who may not grab"));
                }
                if !self.grab_enabled {
                    return fail("grant while grabbing is disabled".into());
                }
                let Some(object) = self.objects.get_mut(object_id) else {
                    return fail(format!("grant on absent object {object_id}"));
                };
                if let Some(current) = object.holder_id {
                    return fail(format!("object {object_id} granted to {holder_id} while held by {current}"));
                }
                if !object.grabbable {
                    return fail(format!("object {object_id} is not grabbable"));
                }
                object.holder_id = Some(*holder_id);
            }
            RoomEvent::GrabReleased { object_id, holder_id } => match self.objects.get_mut(object_id) {
                Some(o) if o.holder_id == Some(*holder_id) => o.holder_id = None,
                _ => return fail(format!("release of object {object_id} by non-holder {holder_id}")),
            },
            RoomEvent::ObjectMoved { object_id, by, transform } => match self.objects.get_mut(object_id) {
                Some(o) if o.holder_id == Some(*by) => o.transform = *transform,
                _ => return fail(format!("object {object_id} moved by non-holder {by}")),
            },
            RoomEvent::AvatarMoved { participant_id, pose } => match self.participants.get_mut(participant_id) {
                Some(p) => {
                    p.last_pose = Some(*pose);
                    p.last_seen = record.at;
                }
                None => return fail(format!("avatar of absent participant {participant_id}")),
            },
            RoomEvent::RoomClosed { reason } => {
                self.closed = Some(reason.clone());
            }
        }
        Ok(())
    }

    fn insert_object(&mut self, object: SceneObject) -> Result<(), String> {
        let id = object.object_id;
        if self.objects.contains_key(&id) {
            return Err(format!("duplicate object id {id}"));
        }
        if object.holder_id.is_some() {
            return Err(format!("object {id} added already held"));
        }
        self.objects.insert(id, object);
        self.next_object_id = self.next_object_id.max(id.wrapping_add(1));
        Ok(())
    }
}

/// Rebuilds room state from a complete log. Sequence numbers must start at
/// zero and be gap-free. An empty log yields the initial (unopened) state.
pub fn replay<'a, I>(records: I) -> Result<RoomState, ReplayError>
where
    I: IntoIterator<Item = &'a EventRecord>,
{
    let mut state = RoomState::default();
    for (expected, record) in records.into_iter().enumerate() {
        if record.seq != expected as u64 {
            return Err(ReplayError::CorruptLog {
                seq: record.seq,
                detail: format!("expected seq {expected}"),
            });
        }
        state.apply(record)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invite_codes_use_the_restricted_alphabet() {
        let mut rng = rand::rng();
        for _ in 0..200 {
            let code = InviteCode::generate(&mut rng);
            assert_eq!(code.as_str().len(), 6);
            assert!(!code.as_str().contains(['I', 'O', '0', '1']));
            assert_eq!(InviteCode::parse(&code.as_str().to_lowercase()), Some(code));
        }
        assert!(InviteCode::parse("ABC1EF").is_none());
        assert!(InviteCode::parse("ABCDE").is_none());
    }

    #[test]
    fn empty_log_replays_to_initial_state() {
        assert_eq!(replay(&[]).unwrap(), RoomState::default());
    }

    #[test]
    fn gap_in_sequence_is_corrupt() {
        let opened = EventRecord {
            seq: 0,
            at: 0,
            event: RoomEvent::RoomOpened {
                room_id: "r".into(),
                vr_code: InviteCode::parse("BBBBBB").unwrap(),
                guest_code: InviteCode::parse("CCCCCC").unwrap(),
                admin_token: "t".into(),
                preset_id: None,
                objects: vec![],
                admin_grace_deadline: 120_000,
            },
        };
        let skipped = EventRecord { seq: 2, at: 5, event: RoomEvent::GrabEnabledSet { enabled: false } };
        assert!(matches!(replay(&[opened, skipped]), Err(ReplayError::CorruptLog { seq: 2, .. })));
    }
}
