//! Starts the server in-process and drives it with two websocket clients.
//! The watcher folds what it receives into a `Replica` and ends up with the
//! same avatar the mover streamed.

use std::time::Duration;

use futures::{SinkExt, StreamExt};
use molxr::protocol::{
    decode_control, decode_pose, encode_control, encode_pose, AvatarPose, Control, ControlMessage, PosePacket, Replica,
    RigidPose, UnitQuat, Vec3,
};
use molxr::server::{start, ServerConfig};
use tokio_tungstenite::tungstenite::Message;

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn send(ws: &mut Ws, seq: u64, body: Control) {
    ws.send(Message::text(encode_control(&ControlMessage::new(seq, body)))).await.unwrap();
}

async fn until<T>(ws: &mut Ws, mut pick: impl FnMut(&Control) -> Option<T>) -> T {
    loop {
        if let Some(Ok(Message::Text(text))) = ws.next().await {
            if let Some(found) = pick(&decode_control(text.as_bytes()).unwrap().body) {
                return found;
            }
        }
    }
}

#[tokio::main]
async fn main() {
    let srv = start(ServerConfig::ephemeral()).await.unwrap();
    println!("server at {}", srv.http_url());

    let (mut mover, _) = tokio_tungstenite::connect_async(srv.ws_url()).await.unwrap();
    send(&mut mover, 1, Control::CreateRoom { preset_id: Some("demo".into()) }).await;
    let (room_id, vr_code, guest_code) = until(&mut mover, |m| match m {
        Control::RoomCreated { room_id, vr_code, guest_code, .. } => Some((room_id.clone(), vr_code.clone(), guest_code.clone())),
        _ => None,
    })
    .await;
    let join = |code: &str, name: &str| Control::JoinRoom { room_id: Some(room_id.clone()), code: code.into(), display_name: name.into() };
    send(&mut mover, 2, join(&vr_code, "mover")).await;
    let me = until(&mut mover, |m| match m {
        Control::JoinAccepted { participant_id, .. } => Some(*participant_id),
        _ => None,
    })
    .await;

    let (mut watcher, _) = tokio_tungstenite::connect_async(srv.ws_url()).await.unwrap();
    send(&mut watcher, 1, join(&guest_code, "watcher")).await;
    let mut replica = until(&mut watcher, |m| match m {
        Control::JoinAccepted { snapshot, .. } => Some(Replica::from_snapshot(snapshot)),
        _ => None,
    })
    .await;
    println!("watcher joined {room_id}: {} objects, {} participants", replica.objects.len(), replica.participants.len());

    let mut last = None;
    for k in 0..30 {
        let angle = k as f32 * 0.1;
        let head = RigidPose::new(
            Vec3::new(angle.cos(), 1.6, angle.sin()),
            UnitQuat::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), -angle as f64),
        );
        let packet = PosePacket::Avatar { participant_id: me, pose: AvatarPose::head_only(head) };
        mover.send(Message::binary(encode_pose(&packet))).await.unwrap();
        last = Some(head);
        tokio::time::sleep(Duration::from_millis(33)).await;
    }

    let deadline = tokio::time::Instant::now() + Duration::from_secs(2);
    while replica.avatars.get(&me).map(|a| a.head) != last {
        match tokio::time::timeout_at(deadline, watcher.next()).await {
            Ok(Some(Ok(Message::Binary(bytes)))) => replica.apply_pose(&decode_pose(&bytes).unwrap()),
            Ok(Some(Ok(Message::Text(text)))) => replica.apply_control(&decode_control(text.as_bytes()).unwrap().body),
            Ok(Some(Ok(_))) => {}
            _ => break,
        }
    }
    println!("watcher sees the mover's final head pose: {}", replica.avatars.get(&me).map(|a| a.head) == last);
    srv.shutdown().await;
}
