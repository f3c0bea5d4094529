//! Two-plane wire protocol shared by the server, the harness and clients.
//!
//! The control plane carries reliable, low-rate session messages as JSON
//! text frames. The pose plane carries high-rate object transforms and
//! avatar poses as fixed-layout little-endian binary frames.

mod control;
mod pose;
mod replica;
mod types;

use thiserror::Error;

pub use control::{
    decode_control, encode_control, Control, ControlMessage, ObjectRecord, ParticipantInfo,
    StateSnapshot, CONTROL_KINDS, PROTOCOL_VERSION,
};
pub use pose::{
    decode_pose, encode_pose, packet_len, PosePacket, Subject, AVATAR_PACKET, FLAG_LEFT_HAND,
    FLAG_RIGHT_HAND, MAX_POSE_PACKET_LEN, OBJECT_PACKET, OBJECT_PACKET_LEN,
};
pub use replica::Replica;
pub use types::{
    AvatarPose, RigidPose, Role, Transform, UnitQuat, Vec3, MAX_SCALE, MIN_SCALE,
    QUAT_ACCEPT_TOLERANCE, QUAT_STORE_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("malformed control message: {0}")]
    Malformed(String),
    #[error("unknown control kind `{0}`")]
    UnknownKind(String),
    #[error("unsupported protocol version {0}")]
    VersionMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseError {
    #[error("malformed pose packet: {0}")]
    MalformedPacket(String),
    #[error("non-finite float in pose payload")]
    InvalidFloat,
    #[error("quaternion norm {norm} is outside tolerance")]
    DenormalQuat { norm: f64 },
    #[error("scale {scale} outside [1e-4, 1e4]")]
    ScaleOutOfRange { scale: f32 },
}
