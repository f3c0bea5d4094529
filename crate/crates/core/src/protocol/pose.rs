//! Fixed-layout binary pose plane.
//!
//! All values are little-endian.
//!
//! ```text
//! 0x01 object:  u8 type | u16 object_id | f32x3 position | f32x4 quat (x,y,z,w) | f32 scale     = 35 bytes
//! 0x02 avatar:  u8 type | u16 participant_id | u8 flags | u8 reserved | head f32x7
//!               | [left f32x7] | [right f32x7]                                    = 33 / 61 / 89 bytes
//! ```
//!
//! Avatar flags: bit 0 left hand present, bit 1 right hand present. Other
//! flag bits and the reserved byte must be zero.

use super::types::{AvatarPose, RigidPose, Transform, UnitQuat, Vec3};
use super::PoseError;

pub const OBJECT_PACKET: u8 = 0x01;
pub const AVATAR_PACKET: u8 = 0x02;

pub const FLAG_LEFT_HAND: u8 = 0b01;
pub const FLAG_RIGHT_HAND: u8 = 0b10;

pub const OBJECT_PACKET_LEN: usize = 35;
pub const AVATAR_HEADER_LEN: usize = 5;
pub const RIGID_POSE_LEN: usize = 28;
/// Upper bound on any pose packet.
pub const MAX_POSE_PACKET_LEN: usize = 96;

/// What a pose packet is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subject {
    Object(u16),
    Avatar(u16),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PosePacket {
    Object { object_id: u16, transform: Transform },
    Avatar { participant_id: u16, pose: AvatarPose },
}

impl PosePacket {
    pub fn subject(&self) -> Subject {
        match self {
            PosePacket::Object { object_id, .. } => Subject::Object(*object_id),
            PosePacket::Avatar { participant_id, .. } => Subject::Avatar(*participant_id),
        }
    }

    pub fn packet_type(&self) -> u8 {
        match self {
            PosePacket::Object { .. } => OBJECT_PACKET,
            PosePacket::Avatar { .. } => AVATAR_PACKET,
        }
    }

    /// Hand-presence flags (always 0 for object packets).
    pub fn flags(&self) -> u8 {
        match self {
            PosePacket::Object { .. } => 0,
            PosePacket::Avatar { pose, .. } => hand_flags(pose),
        }
    }

    pub fn encoded_len(&self) -> usize {
        packet_len(self.packet_type(), self.flags()).expect("valid packet type and flags")
    }
}

fn hand_flags(pose: &AvatarPose) -> u8 {
    let mut flags = 0;
    if pose.left_hand.is_some() {
        flags |= FLAG_LEFT_HAND;
    }
    if pose.right_hand.is_some() {
        flags |= FLAG_RIGHT_HAND;
    }
    flags
}

/// Encoded size for a packet type and flag byte, or `None` if the
/// combination is not valid.
pub fn packet_len(packet_type: u8, flags: u8) -> Option<usize> {
    match packet_type {
        OBJECT_PACKET if flags == 0 => Some(OBJECT_PACKET_LEN),
        AVATAR_PACKET if flags & !(FLAG_LEFT_HAND | FLAG_RIGHT_HAND) == 0 => {
            let hands = flags.count_ones() as usize;
            Some(AVATAR_HEADER_LEN + RIGID_POSE_LEN * (1 + hands))
        }
        _ => None,
    }
}

pub fn encode_pose(packet: &PosePacket) -> Vec<u8> {
    let mut out = Vec::with_capacity(packet.encoded_len());
    match packet {
        PosePacket::Object { object_id, transform } => {
            out.push(OBJECT_PACKET);
            out.extend_from_slice(&object_id.to_le_bytes());
            put_f32s(&mut out, &transform.position.to_array());
            put_f32s(&mut out, &transform.orientation.to_array());
            put_f32s(&mut out, &[transform.scale]);
        }
        PosePacket::Avatar { participant_id, pose } => {
            out.push(AVATAR_PACKET);
            out.extend_from_slice(&participant_id.to_le_bytes());
            out.push(hand_flags(pose));
            out.push(0);
            put_rigid(&mut out, &pose.head);
            for hand in [&pose.left_hand, &pose.right_hand].into_iter().flatten() {
                put_rigid(&mut out, hand);
            }
        }
    }
    debug_assert_eq!(out.len(), packet.encoded_len());
    out
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_rigid(out: &mut Vec<u8>, pose: &RigidPose) {
    put_f32s(out, &pose.position.to_array());
    put_f32s(out, &pose.orientation.to_array());
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn f32(&mut self) -> Result<f32, PoseError> {
        let raw: [u8; 4] = self.bytes[self.at..self.at + 4].try_into().expect("length checked");
        self.at += 4;
        let v = f32::from_le_bytes(raw);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(PoseError::InvalidFloat)
        }
    }

    fn vec3(&mut self) -> Result<Vec3, PoseError> {
        Ok(Vec3::new(self.f32()?, self.f32()?, self.f32()?))
    }

    fn quat(&mut self) -> Result<UnitQuat, PoseError> {
        UnitQuat::from_xyzw(self.f32()?, self.f32()?, self.f32()?, self.f32()?).checked()
    }

    fn rigid(&mut self) -> Result<RigidPose, PoseError> {
        Ok(RigidPose::new(self.vec3()?, self.quat()?))
    }
}

pub fn decode_pose(bytes: &[u8]) -> Result<PosePacket, PoseError> {
    let malformed = |reason: &str| PoseError::MalformedPacket(format!("{reason} ({} bytes)", bytes.len()));
    let (&packet_type, _) = bytes.split_first().ok_or_else(|| malformed("empty frame"))?;
    if bytes.len() < 3 {
        return Err(malformed("truncated header"));
    }
    let subject = u16::from_le_bytes([bytes[1], bytes[2]]);
    let flags = match packet_type {
        OBJECT_PACKET => 0,
        AVATAR_PACKET => {
            if bytes.len() < AVATAR_HEADER_LEN {
                return Err(malformed("truncated avatar header"));
            }
            if bytes[4] != 0 {
                return Err(malformed("nonzero reserved byte"));
            }
            bytes[3]
        }
        other => return Err(malformed(&format!("unknown packet type {other:#04x}"))),
    };
    let expected = packet_len(packet_type, flags).ok_or_else(|| malformed("invalid hand flags"))?;
    if bytes.len() != expected {
        return Err(malformed(&format!("expected {expected} bytes")));
    }

    if packet_type == OBJECT_PACKET {
        let mut r = Reader { bytes, at: 3 };
        let position = r.vec3()?;
        let orientation = r.quat()?;
        let scale = r.f32()?;
        let transform = Transform { position, orientation, scale }.checked()?;
        return Ok(PosePacket::Object { object_id: subject, transform });
    }

    let mut r = Reader { bytes, at: AVATAR_HEADER_LEN };
    let head = r.rigid()?;
    let left_hand = if flags & FLAG_LEFT_HAND != 0 { Some(r.rigid()?) } else { None };
    let right_hand = if flags & FLAG_RIGHT_HAND != 0 { Some(r.rigid()?) } else { None };
    Ok(PosePacket::Avatar {
        participant_id: subject,
        pose: AvatarPose { head, left_hand, right_hand },
    })
}
