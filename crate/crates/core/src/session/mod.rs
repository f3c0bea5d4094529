//! Transport-free room state machine: rooms, invite codes, roles, the object
//! registry and grab-lock arbitration.

mod lobby;
mod roles;
mod room;
mod state;

use thiserror::Error;

pub use lobby::{CodeBook, Lobby, LobbyConfig, DEFAULT_MAX_ROOMS};
pub use roles::{permits, Action};
pub use room::{
    AudioRoute, DropReason, GrabOutcome, PoseCounters, PoseOutcome, Room, RoomConfig,
    RoomCredentials, DEFAULT_ADMIN_GRACE_MS, DEFAULT_PARTICIPANT_CAP,
};
pub use state::{
    replay, EventRecord, InviteCode, Participant, ReplayError, RoomEvent, RoomState, SceneObject,
    MAX_DISPLAY_NAME, PALETTE_SIZE,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("server is at its room limit")]
    ServerFull,
    #[error("unknown or expired code")]
    BadCode,
    #[error("room is full")]
    RoomFull,
    #[error("an admin is already connected")]
    AdminSeatTaken,
    #[error("display name must be 1 to 64 characters")]
    InvalidDisplayName,
    #[error("no object {0}")]
    NoSuchObject(u16),
    #[error("no participant {0}")]
    NoSuchParticipant(u16),
    #[error("participant {participant_id} does not hold object {object_id}")]
    NotHolder { object_id: u16, participant_id: u16 },
    #[error("role may not {0:?}")]
    PermissionDenied(Action),
    #[error("invalid asset: {0}")]
    InvalidAsset(String),
    #[error("room is closed")]
    RoomClosed,
}

impl SessionError {
    /// Stable code carried by `Error` and `JoinRejected` messages.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::ServerFull => "server_full",
            SessionError::BadCode => "bad_code",
            SessionError::RoomFull => "room_full",
            SessionError::AdminSeatTaken => "admin_seat_taken",
            SessionError::InvalidDisplayName => "invalid_display_name",
            SessionError::NoSuchObject(_) => "no_such_object",
            SessionError::NoSuchParticipant(_) => "no_such_participant",
            SessionError::NotHolder { .. } => "not_holder",
            SessionError::PermissionDenied(_) => "permission_denied",
            SessionError::InvalidAsset(_) => "invalid_asset",
            SessionError::RoomClosed => "room_closed",
        }
    }
}
