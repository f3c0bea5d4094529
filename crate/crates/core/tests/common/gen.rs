//! Random generators for every control kind and pose packet shape.

use molxr::protocol::{
    AvatarPose, Control, ControlMessage, ObjectRecord, ParticipantInfo, PosePacket, RigidPose, Role, StateSnapshot,
    Transform, UnitQuat, Vec3, FLAG_LEFT_HAND, FLAG_RIGHT_HAND, MAX_SCALE, MIN_SCALE,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng as Rng8;

const ALPHABET: &[char] = &[
    'a', 'Z', '0', ' ', '-', '_', '"', '\\', '/', '\n', '\t', '\u{0}', '\u{1f}', 'é', 'ß', 'Ω', '水', '😀', '\u{2028}',
];

pub fn text(rng: &mut Rng8, max: usize) -> String {
    let len = rng.random_range(0..=max);
    (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect()
}

/// A finite float drawn from several magnitude bands, including exact
/// zero, negative zero and subnormals.
pub fn float(rng: &mut Rng8) -> f32 {
    match rng.random_range(0..8) {
        0 => 0.0,
        1 => -0.0,
        2 => f32::from_bits(rng.random_range(1..0x0080_0000)) * if rng.random() { 1.0 } else { -1.0 },
        3 => rng.random_range(-1e30f32..1e30),
        4 => rng.random_range(-1.0f32..1.0),
        _ => rng.random_range(-100.0f32..100.0),
    }
}

pub fn vec3(rng: &mut Rng8) -> Vec3 {
    Vec3::new(float(rng), float(rng), float(rng))
}

/// A unit quaternion whose norm is already within store tolerance, so it
/// passes ingestion untouched.
pub fn quat(rng: &mut Rng8) -> UnitQuat {
    if rng.random_range(0..16) == 0 {
        return UnitQuat::IDENTITY;
    }
    let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let q = UnitQuat::from_axis_angle(axis, rng.random_range(-10.0..10.0));
    let q = if rng.random() { UnitQuat::from_xyzw(-q.x, -q.y, -q.z, -q.w) } else { q };
    q.checked().expect("generated quaternion is unit")
}

pub fn scale(rng: &mut Rng8) -> f32 {
    let s = 10f32.powf(rng.random_range(-4.0f32..4.0));
    s.clamp(MIN_SCALE, MAX_SCALE)
}

pub fn transform(rng: &mut Rng8) -> Transform {
    Transform::new(vec3(rng), quat(rng), scale(rng)).unwrap()
}

pub fn rigid(rng: &mut Rng8) -> RigidPose {
    RigidPose::new(vec3(rng), quat(rng))
}

pub fn avatar(rng: &mut Rng8, flags: u8) -> AvatarPose {
    AvatarPose {
        head: rigid(rng),
        left_hand: (flags & FLAG_LEFT_HAND != 0).then(|| rigid(rng)),
        right_hand: (flags & FLAG_RIGHT_HAND != 0).then(|| rigid(rng)),
    }
}

/// Pose families: 0 is the object packet, 1..=4 the avatar packet with
/// hand flags `family - 1`.
pub const POSE_FAMILIES: usize = 5;

pub fn pose(rng: &mut Rng8, family: usize) -> PosePacket {
    match family {
        0 => PosePacket::Object { object_id: rng.random(), transform: transform(rng) },
        f => PosePacket::Avatar { participant_id: rng.random(), pose: avatar(rng, (f - 1) as u8) },
    }
}

fn role(rng: &mut Rng8) -> Role {
    Role::ALL[rng.random_range(0..3)]
}

fn opt<T>(rng: &mut Rng8, f: impl FnOnce(&mut Rng8) -> T) -> Option<T> {
    if rng.random() {
        Some(f(rng))
    } else {
        None
    }
}

fn participant(rng: &mut Rng8) -> ParticipantInfo {
    ParticipantInfo { participant_id: rng.random(), display_name: text(rng, 64), role: role(rng), color_index: rng.random_range(0..8) }
}

fn snapshot(rng: &mut Rng8) -> StateSnapshot {
    let objects = (0..rng.random_range(0..5))
        .map(|_| ObjectRecord {
            object_id: rng.random(),
            asset_url: text(rng, 40),
            label: text(rng, 20),
            transform: transform(rng),
            grabbable: rng.random(),
            holder_id: opt(rng, |r| r.random()),
        })
        .collect();
    let participants = (0..rng.random_range(0..5)).map(|_| participant(rng)).collect();
    StateSnapshot { grab_enabled: rng.random(), objects, participants }
}

/// A random message of the control kind at index `kind` of
/// `CONTROL_KINDS`.
pub fn control(rng: &mut Rng8, kind: usize) -> ControlMessage {
    let body = match kind {
        0 => Control::Hello { connection_id: rng.random() },
        1 => Control::CreateRoom { preset_id: opt(rng, |r| text(r, 16)) },
        2 => Control::RoomCreated {
            room_id: text(rng, 16),
            admin_token: text(rng, 32),
            vr_code: text(rng, 6),
            guest_code: text(rng, 6),
        },
        3 => Control::JoinRoom { room_id: opt(rng, |r| text(r, 16)), code: text(rng, 8), display_name: text(rng, 64) },
        4 => Control::JoinAccepted {
            participant_id: rng.random(),
            role: role(rng),
            color_index: rng.random(),
            snapshot: snapshot(rng),
        },
        5 => Control::JoinRejected { reason: text(rng, 20) },
        6 => Control::StateSnapshot(snapshot(rng)),
        7 => Control::AddObject {
            object_id: opt(rng, |r| r.random()),
            asset_url: text(rng, 40),
            label: text(rng, 20),
            initial_transform: transform(rng),
        },
        8 => Control::RemoveObject { object_id: rng.random() },
        9 => Control::SetGrabEnabled { enabled: rng.random() },
        10 => Control::GrabRequest { object_id: rng.random() },
        11 => Control::GrabGranted { object_id: rng.random(), holder_id: rng.random() },
        12 => Control::GrabDenied { object_id: rng.random(), holder_id: opt(rng, |r| r.random()) },
        13 => Control::GrabRelease { object_id: rng.random() },
        14 => Control::AudioSignal {
            to_participant: rng.random(),
            from_participant: opt(rng, |r| r.random()),
            payload: text(rng, 200),
        },
        15 => Control::ParticipantJoined { participant: participant(rng) },
        16 => Control::ParticipantLeft { participant: participant(rng) },
        17 => Control::Heartbeat,
        18 => Control::Error { code: text(rng, 12), detail: text(rng, 40) },
        other => panic!("no control kind {other}"),
    };
    let seq = if rng.random() { rng.random() } else { rng.random_range(0..1000) };
    ControlMessage::new(seq, body)
}
