//! Heartbeat expiry and the Admin grace period on a simulated clock.

use std::sync::Arc;

use molxr::clock::ManualClock;
use molxr::content::starter_manifest;
use molxr::protocol::{decode_control, encode_control, Control, ControlMessage};
use molxr::server::{Connection, Hub, HubConfig, Outgoing};

fn send(hub: &Hub, conn: &Arc<Connection>, body: Control) {
    hub.ingest_text(conn, encode_control(&ControlMessage::new(0, body)).as_bytes());
}

fn kinds(conn: &Connection) -> Vec<String> {
    conn.drain()
        .into_iter()
        .filter_map(|out| match out {
            Outgoing::Text(t) => Some(decode_control(t.as_bytes()).unwrap().body.kind().to_string()),
            Outgoing::Close { code, reason } => Some(format!("close({code}, {reason})")),
            Outgoing::Binary(_) => None,
        })
        .collect()
}

fn main() {
    let clock = ManualClock::new(0);
    let hub = Arc::new(Hub::new(HubConfig::default(), Arc::new(clock.clone())).with_presets(starter_manifest()));
    let creds = hub.create_room(Some("demo")).unwrap();
    let join = |code: &str, name: &str| {
        let conn = hub.connect();
        send(&hub, &conn, Control::JoinRoom { room_id: Some(creds.room_id.clone()), code: code.into(), display_name: name.into() });
        conn
    };
    let admin = join(&creds.admin_token, "admin");
    let holder = join(creds.vr_code.as_str(), "holder");
    let peer = join(creds.vr_code.as_str(), "peer");
    send(&hub, &holder, Control::GrabRequest { object_id: 1 });
    kinds(&peer);

    let mut admin_gone_at = None;
    for second in 1..=200u64 {
        let now = clock.advance(1_000);
        if second % 5 == 0 {
            send(&hub, &peer, Control::Heartbeat);
            if admin_gone_at.is_none() {
                send(&hub, &admin, Control::Heartbeat);
            }
        }
        let dropped = hub.heartbeat_sweep(now);
        let closed = hub.expire_rooms(now);
        if !dropped.is_empty() {
            println!("t={second:>3}s swept connections {dropped:?}, peer saw {:?}", kinds(&peer));
        }
        if second == 30 {
            hub.disconnect(&admin);
            admin_gone_at = Some(second);
            println!("t={second:>3}s admin disconnects");
        }
        if !closed.is_empty() {
            println!("t={second:>3}s room closed {}s after the admin left, peer saw {:?}", second - admin_gone_at.unwrap(), kinds(&peer));
            break;
        }
    }
}
