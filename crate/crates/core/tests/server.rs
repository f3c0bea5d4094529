use std::time::Duration;

use futures::{SinkExt, StreamExt};
use molxr::pdb2asset::{pdb_to_glb, MeshStyle};
use molxr::protocol::{
    decode_control, decode_pose, encode_control, encode_pose, AvatarPose, Control, ControlMessage, PosePacket,
    RigidPose, UnitQuat, Vec3,
};
use molxr::server::{
    parse_metrics, serve_main, start, RunningServer, ServerConfig, ServerError, ADMIN_TOKEN_HEADER, EXIT_BAD_CONFIG,
    EXIT_BIND_FAILURE,
};
use molxr::session::{replay, EventRecord, RoomState};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

const WATER: &[u8] = include_bytes!("../assets/molecules/water.pdb");

async fn server() -> RunningServer {
    start(ServerConfig::ephemeral()).await.unwrap()
}

async fn connect(srv: &RunningServer) -> Ws {
    tokio_tungstenite::connect_async(srv.ws_url()).await.unwrap().0
}

async fn send(ws: &mut Ws, body: Control) {
    ws.send(Message::text(encode_control(&ControlMessage::new(0, body)))).await.unwrap();
}

async fn next_frame(ws: &mut Ws) -> Message {
    tokio::time::timeout(Duration::from_secs(5), ws.next()).await.expect("no frame within 5 s").unwrap().unwrap()
}

async fn next_control(ws: &mut Ws) -> Control {
    loop {
        if let Message::Text(text) = next_frame(ws).await {
            return decode_control(text.as_bytes()).unwrap().body;
        }
    }
}

struct Room {
    room_id: String,
    admin_token: String,
    vr_code: String,
}

async fn create_room(ws: &mut Ws, preset: &str) -> Room {
    assert!(matches!(next_control(ws).await, Control::Hello { .. }));
    send(ws, Control::CreateRoom { preset_id: Some(preset.into()) }).await;
    match next_control(ws).await {
        Control::RoomCreated { room_id, admin_token, vr_code, .. } => Room { room_id, admin_token, vr_code },
        other => panic!("{other:?}"),
    }
}

async fn join(ws: &mut Ws, room: &Room, code: &str, name: &str) -> u16 {
    send(ws, Control::JoinRoom { room_id: Some(room.room_id.clone()), code: code.into(), display_name: name.into() }).await;
    loop {
        match next_control(ws).await {
            Control::JoinAccepted { participant_id, .. } => return participant_id,
            Control::Hello { .. } => {}
            other => panic!("{other:?}"),
        }
    }
}

#[tokio::test]
async fn healthz_counts_rooms() {
    let srv = server().await;
    let body = reqwest::get(format!("{}/healthz", srv.http_url())).await.unwrap().text().await.unwrap();
    assert_eq!(body, "ok rooms=0\n");
    let mut ws = connect(&srv).await;
    create_room(&mut ws, "empty").await;
    let body = reqwest::get(format!("{}/healthz", srv.http_url())).await.unwrap().text().await.unwrap();
    assert_eq!(body, "ok rooms=1\n");
    srv.shutdown().await;
}

#[tokio::test]
async fn missing_manifest_and_bad_tick_rate_are_bad_config() {
    let missing = ServerConfig { manifest: Some("/nonexistent/manifest.toml".into()), ..ServerConfig::ephemeral() };
    assert!(matches!(start(missing).await.err(), Some(ServerError::BadConfig(_))));
    let mut config = ServerConfig::ephemeral();
    config.hub.tick_hz = 0;
    assert!(matches!(start(config).await.err(), Some(ServerError::BadConfig(_))));
}

#[tokio::test]
async fn occupied_port_is_a_bind_failure() {
    let srv = server().await;
    let clash = ServerConfig { addr: srv.local_addr, ..ServerConfig::ephemeral() };
    assert!(matches!(start(clash).await.err(), Some(ServerError::BindFailure(_))));
    srv.shutdown().await;
}

#[test]
fn binary_exit_codes() {
    assert_eq!(serve_main(["molxr-server", "--manifest", "/nonexistent/manifest.toml", "--port", "0"]), EXIT_BAD_CONFIG);
    assert_eq!(serve_main(["molxr-server", "--tick-hz", "0"]), EXIT_BAD_CONFIG);
    assert_eq!(serve_main(["molxr-server", "--no-such-flag"]), EXIT_BAD_CONFIG);
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    assert_eq!(serve_main(["molxr-server", "--bind", "127.0.0.1", "--port", &port]), EXIT_BIND_FAILURE);
}

#[tokio::test]
async fn shutdown_sends_room_closed_then_a_close_frame() {
    let srv = server().await;
    let mut admin = connect(&srv).await;
    let room = create_room(&mut admin, "empty").await;
    join(&mut admin, &room, &room.admin_token, "admin").await;
    let mut guest = connect(&srv).await;
    join(&mut guest, &room, &room.vr_code, "guest").await;
    let mut lobby = connect(&srv).await;
    assert!(matches!(next_control(&mut lobby).await, Control::Hello { .. }));

    let stopping = tokio::spawn(srv.shutdown());
    for ws in [&mut admin, &mut guest] {
        let mut saw_closed = false;
        loop {
            match next_frame(ws).await {
                Message::Text(text) => {
                    if let Control::Error { code, .. } = decode_control(text.as_bytes()).unwrap().body {
                        saw_closed |= code == "room_closed";
                    }
                }
                Message::Close(frame) => {
                    assert!(saw_closed, "close frame arrived before room_closed");
                    let frame = frame.unwrap();
                    assert_eq!(frame.code, CloseCode::Normal);
                    assert_eq!(frame.reason.as_str(), "room_closed");
                    break;
                }
                _ => {}
            }
        }
    }
    match next_frame(&mut lobby).await {
        Message::Close(Some(frame)) => assert_eq!(frame.code, CloseCode::Away),
        other => panic!("{other:?}"),
    }
    stopping.await.unwrap();
}

#[tokio::test]
async fn poses_fan_out_over_real_sockets() {
    let srv = server().await;
    let mut a = connect(&srv).await;
    let room = create_room(&mut a, "empty").await;
    let pid = join(&mut a, &room, &room.vr_code, "a").await;
    let mut b = connect(&srv).await;
    join(&mut b, &room, &room.vr_code, "b").await;

    let pose = AvatarPose::head_only(RigidPose::new(
        Vec3::new(0.25, 1.5, -0.5),
        UnitQuat::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), 0.7),
    ));
    let packet = PosePacket::Avatar { participant_id: pid, pose };
    a.send(Message::binary(encode_pose(&packet))).await.unwrap();
    loop {
        if let Message::Binary(bytes) = next_frame(&mut b).await {
            assert_eq!(decode_pose(&bytes).unwrap(), packet);
            break;
        }
    }
    a.send(Message::binary(vec![0x01, 0, 0])).await.unwrap();
    tokio::time::sleep(Duration::from_millis(100)).await;
    let text = reqwest::get(format!("{}/metrics", srv.http_url())).await.unwrap().text().await.unwrap();
    let samples = parse_metrics(&text);
    let value = |name: &str| samples.iter().find(|s| s.name == name).unwrap().value;
    assert_eq!(value("molxr_pose_malformed_total"), 1.0);
    assert_eq!(value("molxr_rooms"), 1.0);
    assert!(value("molxr_ticks_total") > 0.0);
    srv.shutdown().await;
}

#[tokio::test]
async fn assets_upload_and_fetch_with_admin_token() {
    let srv = server().await;
    let mut ws = connect(&srv).await;
    let room = create_room(&mut ws, "empty").await;
    let http = reqwest::Client::new();
    let glb = pdb_to_glb(WATER, MeshStyle::BallAndStick, 2, "water").unwrap();

    let anonymous = http.post(format!("{}/assets", srv.http_url())).body(glb.clone()).send().await.unwrap();
    assert_eq!(anonymous.status(), 401);

    let created = http
        .post(format!("{}/assets", srv.http_url()))
        .header(ADMIN_TOKEN_HEADER, &room.admin_token)
        .body(glb.clone())
        .send()
        .await
        .unwrap();
    assert_eq!(created.status(), 201);
    let url = created.json::<serde_json::Value>().await.unwrap()["url"].as_str().unwrap().to_owned();
    assert!(url.starts_with("/assets/") && url.ends_with(".glb"));

    let fetched = http.get(format!("{}{url}", srv.http_url())).send().await.unwrap();
    assert_eq!(fetched.status(), 200);
    assert!(fetched.headers()["cache-control"].to_str().unwrap().contains("immutable"));
    assert_eq!(fetched.bytes().await.unwrap().as_ref(), glb.as_slice());

    let junk = http
        .post(format!("{}/assets", srv.http_url()))
        .header(ADMIN_TOKEN_HEADER, &room.admin_token)
        .body(b"definitely not a glb".to_vec())
        .send()
        .await
        .unwrap();
    assert_eq!(junk.status(), 422);
    let missing = http.get(format!("{}/assets/{}.glb", srv.http_url(), "0".repeat(64))).send().await.unwrap();
    assert_eq!(missing.status(), 404);

    let text = http.get(format!("{}/metrics", srv.http_url())).send().await.unwrap().text().await.unwrap();
    let served = parse_metrics(&text).into_iter().find(|s| s.name == "molxr_asset_bytes_served_total").unwrap();
    assert_eq!(served.value as usize, glb.len());
    srv.shutdown().await;
}

#[tokio::test]
async fn presets_include_the_starter_rooms_with_resolved_assets() {
    let srv = server().await;
    let presets: Vec<serde_json::Value> = reqwest::get(format!("{}/presets", srv.http_url())).await.unwrap().json().await.unwrap();
    assert!(presets.len() >= 8);
    let demo = presets.iter().find(|p| p["preset_id"] == "demo").unwrap();
    for object in demo["objects"].as_array().unwrap() {
        let url = object["asset_url"].as_str().unwrap();
        assert!(url.starts_with("/assets/"), "{url}");
        let status = reqwest::get(format!("{}{url}", srv.http_url())).await.unwrap().status();
        assert_eq!(status, 200);
    }
    srv.shutdown().await;
}

#[tokio::test]
async fn room_state_and_log_need_that_rooms_token() {
    let srv = server().await;
    let mut ws = connect(&srv).await;
    let room = create_room(&mut ws, "demo").await;
    let mut other = connect(&srv).await;
    let other_room = create_room(&mut other, "empty").await;
    join(&mut ws, &room, &room.admin_token, "admin").await;
    let http = reqwest::Client::new();
    let path = |what: &str| format!("{}/rooms/{}/{what}", srv.http_url(), room.room_id);

    assert_eq!(http.get(path("state")).send().await.unwrap().status(), 401);
    let foreign = http.get(path("log")).header(ADMIN_TOKEN_HEADER, &other_room.admin_token).send().await.unwrap();
    assert_eq!(foreign.status(), 401);

    let state: RoomState = http.get(path("state")).header(ADMIN_TOKEN_HEADER, &room.admin_token).send().await.unwrap().json().await.unwrap();
    let log: Vec<EventRecord> = http.get(path("log")).header(ADMIN_TOKEN_HEADER, &room.admin_token).send().await.unwrap().json().await.unwrap();
    assert_eq!(state.objects.len(), 2);
    assert_eq!(state.participants.len(), 1);
    assert_eq!(replay(&log).unwrap(), state);
    srv.shutdown().await;
}
