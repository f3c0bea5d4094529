use serde::{Deserialize, Serialize};

use crate::protocol::Role;

/// Everything a participant can attempt inside a room.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    MoveAvatar,
    ListenAudio,
    GrabObject,
    TransformHeldObject,
    ReleaseObject,
    SendAudio,
    SetGrabEnabled,
    AddObject,
    RemoveObject,
}

impl Action {
    pub const ALL: [Action; 9] = [
        Action::MoveAvatar,
        Action::ListenAudio,
        Action::GrabObject,
        Action::TransformHeldObject,
        Action::ReleaseObject,
        Action::SendAudio,
        Action::SetGrabEnabled,
        Action::AddObject,
        Action::RemoveObject,
    ];
}

/// Static permission matrix. Passive ⊂ VR-active ⊂ Admin.
pub fn permits(role: Role, action: Action) -> bool {
    use Action::*;
    match action {
        MoveAvatar | ListenAudio => true,
        GrabObject | TransformHeldObject | ReleaseObject | SendAudio => {
            matches!(role, Role::Admin | Role::VrActive)
        }
        SetGrabEnabled | AddObject | RemoveObject => role == Role::Admin,
    }
}
