//! Encodes one message of each plane and prints the wire bytes.

use molxr::protocol::{
    decode_control, decode_pose, encode_control, encode_pose, packet_len, AvatarPose, Control, ControlMessage,
    PosePacket, RigidPose, Transform, UnitQuat, Vec3,
};

fn main() {
    let grab = ControlMessage::new(42, Control::GrabRequest { object_id: 3 });
    let text = encode_control(&grab);
    println!("control  {text}");
    assert_eq!(decode_control(text.as_bytes()).unwrap(), grab);

    let yaw = UnitQuat::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), 0.5);
    let object = PosePacket::Object {
        object_id: 3,
        transform: Transform { position: Vec3::new(0.2, 1.1, -0.6), orientation: yaw, scale: 0.8 },
    };
    let head = RigidPose::new(Vec3::new(0.0, 1.7, 0.0), yaw);
    let hand = RigidPose::new(Vec3::new(0.3, 1.2, -0.2), UnitQuat::IDENTITY);
    let avatars = [
        AvatarPose::head_only(head),
        AvatarPose { left_hand: Some(hand), ..AvatarPose::head_only(head) },
        AvatarPose { left_hand: Some(hand), right_hand: Some(hand), ..AvatarPose::head_only(head) },
    ];

    let packets = std::iter::once(object).chain(avatars.into_iter().map(|pose| PosePacket::Avatar { participant_id: 7, pose }));
    for packet in packets {
        let bytes = encode_pose(&packet);
        assert_eq!(decode_pose(&bytes).unwrap(), packet);
        println!("pose {:>3} B  {}", bytes.len(), hex::encode(&bytes[..12]));
    }

    for flags in 0..4 {
        println!("avatar flags {flags:#04b}: {} B", packet_len(0x02, flags).unwrap());
    }

    let mut denormal = encode_pose(&PosePacket::Object { object_id: 1, transform: Transform::IDENTITY });
    denormal[27..31].copy_from_slice(&2.0f32.to_le_bytes());
    println!("w = 2: {}", decode_pose(&denormal).unwrap_err());
    println!("truncated: {}", decode_pose(&denormal[..34]).unwrap_err());
}
