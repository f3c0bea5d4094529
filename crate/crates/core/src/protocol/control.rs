//! Text control plane.
//!
//! Every frame is one JSON object of the form
//! `{"v":1,"seq":<u64>,"kind":"<variant>", ...fields}`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::types::{Role, Transform};
use super::ControlError;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantInfo {
    pub participant_id: u16,
    pub display_name: String,
    pub role: Role,
    pub color_index: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub object_id: u16,
    pub asset_url: String,
    pub label: String,
    pub transform: Transform,
    pub grabbable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder_id: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub grab_enabled: bool,
    pub objects: Vec<ObjectRecord>,
    pub participants: Vec<ParticipantInfo>,
}

/// Control-plane message bodies. The serialized `kind` tag is the
/// snake_case variant name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Control {
    /// Server greeting sent once per connection.
    Hello { connection_id: u64 },
    CreateRoom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset_id: Option<String>,
    },
    RoomCreated { room_id: String, admin_token: String, vr_code: String, guest_code: String },
    /// `room_id` may be omitted for invite codes, which are unique across
    /// live rooms. Joining with the admin token requires it.
    JoinRoom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        room_id: Option<String>,
        code: String,
        display_name: String,
    },
    JoinAccepted { participant_id: u16, role: Role, color_index: u8, snapshot: StateSnapshot },
    JoinRejected { reason: String },
    StateSnapshot(StateSnapshot),
    /// Client request (no `object_id`) or server announcement (with the
    /// id the server assigned).
    AddObject {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        object_id: Option<u16>,
        asset_url: String,
        label: String,
        initial_transform: Transform,
    },
    RemoveObject { object_id: u16 },
    SetGrabEnabled { enabled: bool },
    GrabRequest { object_id: u16 },
    GrabGranted { object_id: u16, holder_id: u16 },
    /// `holder_id` names the current holder, if the object is held.
    GrabDenied {
        object_id: u16,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        holder_id: Option<u16>,
    },
    GrabRelease { object_id: u16 },
    /// Opaque peer-audio negotiation text. The server fills in
    /// `from_participant` when relaying.
    AudioSignal {
        to_participant: u16,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from_participant: Option<u16>,
        payload: String,
    },
    ParticipantJoined { participant: ParticipantInfo },
    ParticipantLeft { participant: ParticipantInfo },
    Heartbeat,
    Error { code: String, detail: String },
}

pub const CONTROL_KINDS: [&str; 19] = [
    "hello",
    "create_room",
    "room_created",
    "join_room",
    "join_accepted",
    "join_rejected",
    "state_snapshot",
    "add_object",
    "remove_object",
    "set_grab_enabled",
    "grab_request",
    "grab_granted",
    "grab_denied",
    "grab_release",
    "audio_signal",
    "participant_joined",
    "participant_left",
    "heartbeat",
    "error",
];

impl Control {
    pub fn kind(&self) -> &'static str {
        match self {
            Control::Hello { .. } => "hello",
            Control::CreateRoom { .. } => "create_room",
            Control::RoomCreated { .. } => "room_created",
            Control::JoinRoom { .. } => "join_room",
            Control::JoinAccepted { .. } => "join_accepted",
            Control::JoinRejected { .. } => "join_rejected",
            Control::StateSnapshot(_) => "state_snapshot",
            Control::AddObject { .. } => "add_object",
            Control::RemoveObject { .. } => "remove_object",
            Control::SetGrabEnabled { .. } => "set_grab_enabled",
            Control::GrabRequest { .. } => "grab_request",
            Control::GrabGranted { .. } => "grab_granted",
            Control::GrabDenied { .. } => "grab_denied",
            Control::GrabRelease { .. } => "grab_release",
            Control::AudioSignal { .. } => "audio_signal",
            Control::ParticipantJoined { .. } => "participant_joined",
            Control::ParticipantLeft { .. } => "participant_left",
            Control::Heartbeat => "heartbeat",
            Control::Error { .. } => "error",
        }
    }

    pub fn error(code: impl Into<String>, detail: impl Into<String>) -> Self {
        Control::Error { code: code.into(), detail: detail.into() }
    }

    fn transforms_mut(&mut self) -> Vec<&mut Transform> {
        match self {
            Control::AddObject { initial_transform, .. } => vec![initial_transform],
            Control::JoinAccepted { snapshot, .. } | Control::StateSnapshot(snapshot) => {
                snapshot.objects.iter_mut().map(|o| &mut o.transform).collect()
            }
            _ => Vec::new(),
        }
    }
}

/// A control body plus its per-connection sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMessage {
    pub seq: u64,
    pub body: Control,
}

impl ControlMessage {
    pub fn new(seq: u64, body: Control) -> Self {
        Self { seq, body }
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    v: u64,
    seq: u64,
    #[serde(flatten)]
    body: &'a Control,
}

pub fn encode_control(msg: &ControlMessage) -> String {
    let envelope = Envelope { v: PROTOCOL_VERSION, seq: msg.seq, body: &msg.body };
    serde_json::to_string(&envelope).expect("control messages always serialize")
}

pub fn decode_control(bytes: &[u8]) -> Result<ControlMessage, ControlError> {
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| ControlError::Malformed(e.to_string()))?;
    let Value::Object(mut map) = value else {
        return Err(ControlError::Malformed("frame is not an object".into()));
    };
    let version = map
        .remove("v")
        .ok_or_else(|| ControlError::Malformed("missing protocol version".into()))?;
    match version.as_u64() {
        Some(PROTOCOL_VERSION) => {}
        Some(found) => return Err(ControlError::VersionMismatch(found.to_string())),
        None => return Err(ControlError::VersionMismatch(version.to_string())),
    }
    let seq = map
        .remove("seq")
        .and_then(|s| s.as_u64())
        .ok_or_else(|| ControlError::Malformed("missing or invalid seq".into()))?;
    let kind = match map.get("kind") {
        Some(Value::String(kind)) => kind.clone(),
        _ => return Err(ControlError::Malformed("missing kind".into())),
    };
    if !CONTROL_KINDS.contains(&kind.as_str()) {
        return Err(ControlError::UnknownKind(kind));
    }
    let mut body: Control = serde_json::from_value(Value::Object(map))
        .map_err(|e| ControlError::Malformed(format!("{kind}: {e}")))?;
    for transform in body.transforms_mut() {
        *transform = transform
            .checked()
            .map_err(|e| ControlError::Malformed(format!("{kind}: {e}")))?;
    }
    Ok(ControlMessage { seq, body })
}
