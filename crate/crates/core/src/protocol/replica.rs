//! Client-side replica of a room, folded from the wire stream alone.
//!
//! A replica starts from the snapshot carried by `JoinAccepted` and then
//! applies control events and pose packets in arrival order. It knows
//! nothing about the server's internal event log, which makes it a useful
//! independent check on snapshot-plus-delta consistency.

use std::collections::BTreeMap;

use super::control::{Control, ObjectRecord, ParticipantInfo, StateSnapshot};
use super::pose::PosePacket;
use super::types::AvatarPose;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Replica {
    pub participant_id: Option<u16>,
    pub grab_enabled: bool,
    pub objects: BTreeMap<u16, ObjectRecord>,
    pub participants: BTreeMap<u16, ParticipantInfo>,
    pub avatars: BTreeMap<u16, AvatarPose>,
    pub closed: bool,
    has_snapshot: bool,
}

impl Replica {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_snapshot(snapshot: &StateSnapshot) -> Self {
        let mut replica = Self::new();
        replica.load_snapshot(snapshot);
        replica
    }

    pub fn has_snapshot(&self) -> bool {
        self.has_snapshot
    }

    pub fn load_snapshot(&mut self, snapshot: &StateSnapshot) {
        self.grab_enabled = snapshot.grab_enabled;
        self.objects = snapshot.objects.iter().map(|o| (o.object_id, o.clone())).collect();
        self.participants =
            snapshot.participants.iter().map(|p| (p.participant_id, p.clone())).collect();
        self.avatars.retain(|id, _| self.participants.contains_key(id));
        self.has_snapshot = true;
    }

    /// Current view as a snapshot, for comparison against the server's.
    pub fn to_snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            grab_enabled: self.grab_enabled,
            objects: self.objects.values().cloned().collect(),
            participants: self.participants.values().cloned().collect(),
        }
    }

    pub fn apply_control(&mut self, body: &Control) {
        match body {
            Control::JoinAccepted { participant_id, snapshot, .. } => {
                self.participant_id = Some(*participant_id);
                self.load_snapshot(snapshot);
            }
            Control::StateSnapshot(snapshot) => self.load_snapshot(snapshot),
            Control::AddObject { object_id: Some(id), asset_url, label, initial_transform } => {
                self.objects.insert(
                    *id,
                    ObjectRecord {
                        object_id: *id,
                        asset_url: asset_url.clone(),
                        label: label.clone(),
                        transform: *initial_transform,
                        grabbable: true,
                        holder_id: None,
                    },
                );
            }
            Control::RemoveObject { object_id } => {
                self.objects.remove(object_id);
            }
            Control::SetGrabEnabled { enabled } => {
                self.grab_enabled = *enabled;
                if !enabled {
                    for object in self.objects.values_mut() {
                        object.holder_id = None;
                    }
                }
            }
            Control::GrabGranted { object_id, holder_id } => {
                if let Some(object) = self.objects.get_mut(object_id) {
                    object.holder_id = Some(*holder_id);
                }
            }
            Control::GrabRelease { object_id } => {
                if let Some(object) = self.objects.get_mut(object_id) {
                    object.holder_id = None;
                }
            }
            Control::ParticipantJoined { participant } => {
                self.participants.insert(participant.participant_id, participant.clone());
            }
            Control::ParticipantLeft { participant } => {
                self.participants.remove(&participant.participant_id);
                self.avatars.remove(&participant.participant_id);
                for object in self.objects.values_mut() {
                    if object.holder_id == Some(participant.participant_id) {
                        object.holder_id = None;
                    }
                }
            }
            Control::Error { code, .. } if code == "room_closed" => self.closed = true,
            _ => {}
        }
    }

    pub fn apply_pose(&mut self, packet: &PosePacket) {
        match packet {
            PosePacket::Object { object_id, transform } => {
                if let Some(object) = self.objects.get_mut(object_id) {
                    object.transform = *transform;
                }
            }
            PosePacket::Avatar { participant_id, pose } => {
                if self.participants.contains_key(participant_id) {
                    self.avatars.insert(*participant_id, *pose);
                }
            }
        }
    }

    /// Holder of `object_id` as far as this replica knows.
    pub fn holder_of(&self, object_id: u16) -> Option<u16> {
        self.objects.get(&object_id).and_then(|o| o.holder_id)
    }
}
