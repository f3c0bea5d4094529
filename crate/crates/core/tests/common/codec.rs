//! Round-trip drivers and a hand-written reference reader for the pose
//! layout.

use molxr::protocol::{
    decode_control, decode_pose, encode_control, encode_pose, packet_len, PosePacket, CONTROL_KINDS,
    MAX_POSE_PACKET_LEN,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gen;

/// Reads a pose frame by walking the documented field offsets, without
/// touching the crate's decoder. Yields (type, subject, flags, floats).
pub fn reference_read(bytes: &[u8]) -> (u8, u16, u8, Vec<f32>) {
    let f = |at: usize| f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let subject = u16::from_le_bytes([bytes[1], bytes[2]]);
    match bytes[0] {
        0x01 => (0x01, subject, 0, (0..8).map(|k| f(3 + 4 * k)).collect()),
        0x02 => {
            let flags = bytes[3];
            let parts = 1 + (flags & 1) as usize + (flags >> 1 & 1) as usize;
            (0x02, subject, flags, (0..7 * parts).map(|k| f(5 + 4 * k)).collect())
        }
        t => panic!("unexpected type {t}"),
    }
}

fn packet_floats(p: &PosePacket) -> (u8, u16, u8, Vec<f32>) {
    match p {
        PosePacket::Object { object_id, transform: t } => {
            let (v, q) = (t.position, t.orientation);
            (0x01, *object_id, 0, vec![v.x, v.y, v.z, q.x, q.y, q.z, q.w, t.scale])
        }
        PosePacket::Avatar { participant_id, pose } => {
            let flags = pose.left_hand.is_some() as u8 | (pose.right_hand.is_some() as u8) << 1;
            let mut floats = Vec::new();
            for r in [Some(pose.head), pose.left_hand, pose.right_hand].into_iter().flatten() {
                let (v, q) = (r.position, r.orientation);
                floats.extend([v.x, v.y, v.z, q.x, q.y, q.z, q.w]);
            }
            (0x02, *participant_id, flags, floats)
        }
    }
}

fn same_bits(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[derive(Debug, Default)]
pub struct Tally {
    pub trials: u64,
    pub mismatches: u64,
    pub first: Option<String>,
}

impl Tally {
    fn miss(&mut self, what: String) {
        self.mismatches += 1;
        self.first.get_or_insert(what);
    }
}

/// `n` random pose packets of one family: decode inverts encode
/// bit-exactly, the bytes match the reference reader, and the length
/// follows the size law.
pub fn pose_round_trips(family: usize, n: u64, seed: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::default();
    for _ in 0..n {
        tally.trials += 1;
        let packet = gen::pose(&mut rng, family);
        let bytes = encode_pose(&packet);
        let expected = packet_floats(&packet);
        if bytes.len() != packet_len(expected.0, expected.2).unwrap() || bytes.len() > MAX_POSE_PACKET_LEN {
            tally.miss(format!("{packet:?}: {} bytes", bytes.len()));
            continue;
        }
        let seen = reference_read(&bytes);
        if (seen.0, seen.1, seen.2) != (expected.0, expected.1, expected.2) || !same_bits(&seen.3, &expected.3) {
            tally.miss(format!("{packet:?}: layout differs from the reference reader"));
            continue;
        }
        match decode_pose(&bytes) {
            Ok(back) if same_bits(&packet_floats(&back).3, &expected.3) && back == packet => {}
            other => tally.miss(format!("{packet:?} decoded to {other:?}")),
        }
    }
    tally
}

/// `n` random messages of one control kind survive encode then decode
/// field-exactly.
pub fn control_round_trips(kind: usize, n: u64, seed: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::default();
    for _ in 0..n {
        tally.trials += 1;
        let msg = gen::control(&mut rng, kind);
        let text = encode_control(&msg);
        match decode_control(text.as_bytes()) {
            Ok(back) if back == msg && back.body.kind() == CONTROL_KINDS[kind] => {}
            other => tally.miss(format!("{text} decoded to {other:?}")),
        }
    }
    tally
}
