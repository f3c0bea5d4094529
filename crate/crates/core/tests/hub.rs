use std::sync::Arc;

use molxr::clock::ManualClock;
use molxr::content::starter_manifest;
use molxr::protocol::{
    decode_control, decode_pose, encode_control, encode_pose, AvatarPose, Control, ControlMessage, PosePacket,
    RigidPose, Role, Transform, UnitQuat, Vec3,
};
use molxr::server::{parse_metrics, Connection, Hub, HubConfig, Outgoing, CLOSE_POLICY, DEFAULT_OUTBOX_LIMIT};
use molxr::session::RoomCredentials;

#[derive(Debug, Default)]
struct Received {
    control: Vec<ControlMessage>,
    poses: Vec<PosePacket>,
    pose_bytes: usize,
    close: Option<(u16, String)>,
}

fn drain(conn: &Connection, into: &mut Received) {
    for out in conn.drain() {
        match out {
            Outgoing::Text(t) => into.control.push(decode_control(t.as_bytes()).unwrap()),
            Outgoing::Binary(b) => {
                into.pose_bytes += b.len();
                into.poses.push(decode_pose(&b).unwrap());
            }
            Outgoing::Close { code, reason } => into.close = Some((code, reason)),
        }
    }
}

fn kinds(r: &Received) -> Vec<&'static str> {
    r.control.iter().map(|m| m.body.kind()).collect()
}

struct World {
    clock: ManualClock,
    hub: Arc<Hub>,
    creds: RoomCredentials,
}

impl World {
    fn new(preset: Option<&str>) -> Self {
        Self::with_config(preset, HubConfig::default())
    }

    fn with_config(preset: Option<&str>, config: HubConfig) -> Self {
        let clock = ManualClock::new(1_000);
        let hub = Arc::new(Hub::new(config, Arc::new(clock.clone())).with_presets(starter_manifest()));
        let creds = hub.create_room(preset).unwrap();
        World { clock, hub, creds }
    }

    fn send(&self, conn: &Arc<Connection>, body: Control) {
        self.hub.ingest_text(conn, encode_control(&ControlMessage { seq: 0, body }).as_bytes());
    }

    fn join(&self, code: &str, name: &str) -> (Arc<Connection>, u16) {
        let conn = self.hub.connect();
        self.send(&conn, Control::JoinRoom { room_id: Some(self.creds.room_id.clone()), code: code.into(), display_name: name.into() });
        let mut r = Received::default();
        drain(&conn, &mut r);
        let id = r
            .control
            .iter()
            .find_map(|m| match m.body {
                Control::JoinAccepted { participant_id, .. } => Some(participant_id),
                _ => None,
            })
            .unwrap_or_else(|| panic!("join failed: {:?}", r.control));
        (conn, id)
    }

    fn admin(&self) -> (Arc<Connection>, u16) {
        self.join(&self.creds.admin_token.clone(), "admin")
    }

    fn vr(&self, name: &str) -> (Arc<Connection>, u16) {
        self.join(self.creds.vr_code.as_str(), name)
    }

    fn guest(&self, name: &str) -> (Arc<Connection>, u16) {
        self.join(self.creds.guest_code.as_str(), name)
    }
}

fn head(participant_id: u16, x: f32) -> Vec<u8> {
    encode_pose(&PosePacket::Avatar {
        participant_id,
        pose: AvatarPose::head_only(RigidPose { position: Vec3::new(x, 1.6, 0.0), orientation: UnitQuat::IDENTITY }),
    })
}

fn object(object_id: u16, x: f32) -> Vec<u8> {
    encode_pose(&PosePacket::Object { object_id, transform: Transform::at(Vec3::new(x, 1.0, 0.0)) })
}

#[test]
fn connect_greets_with_hello() {
    let w = World::new(None);
    let conn = w.hub.connect();
    let mut r = Received::default();
    drain(&conn, &mut r);
    assert!(matches!(r.control[0].body, Control::Hello { connection_id } if connection_id == conn.id()));
}

#[test]
fn create_room_over_the_control_plane() {
    let w = World::new(None);
    let conn = w.hub.connect();
    w.send(&conn, Control::CreateRoom { preset_id: Some("symmetry".into()) });
    w.send(&conn, Control::CreateRoom { preset_id: Some("nope".into()) });
    let mut r = Received::default();
    drain(&conn, &mut r);
    assert_eq!(kinds(&r), vec!["hello", "room_created", "error"]);
    let Control::RoomCreated { room_id, .. } = &r.control[1].body else { unreachable!() };
    assert_eq!(w.hub.room_state(room_id).unwrap().objects.len(), 4);
}

#[test]
fn pose_fan_out_excludes_the_sender() {
    let w = World::new(None);
    let (a, pa) = w.vr("p1");
    let (b, _) = w.vr("p2");
    let (c, _) = w.guest("p3");
    w.hub.ingest_binary(&a, &head(pa, 0.5));
    w.hub.tick();
    let (mut ra, mut rb, mut rc) = (Received::default(), Received::default(), Received::default());
    drain(&a, &mut ra);
    drain(&b, &mut rb);
    drain(&c, &mut rc);
    assert!(ra.poses.is_empty());
    assert_eq!(rb.poses.len(), 1);
    assert_eq!(rc.poses.len(), 1);
}

#[test]
fn one_tick_coalesces_to_the_last_transform() {
    let w = World::new(Some("demo"));
    let (holder, h) = w.vr("holder");
    let (observer, _) = w.guest("observer");
    w.send(&holder, Control::GrabRequest { object_id: 1 });
    drain(&observer, &mut Received::default());
    for k in 0..100 {
        w.hub.ingest_binary(&holder, &object(1, k as f32 * 0.01));
    }
    w.hub.tick();
    let mut r = Received::default();
    drain(&observer, &mut r);
    assert_eq!(r.poses.len(), 1);
    let last = decode_pose(&object(1, 99.0 * 0.01)).unwrap();
    assert_eq!(r.poses[0], last);
    let PosePacket::Object { transform, .. } = last else { unreachable!() };
    assert_eq!(w.hub.room_state(&w.creds.room_id).unwrap().objects[&1].transform, transform);
    let _ = h;
}

#[test]
fn settled_subjects_are_repeated_then_forgotten() {
    let w = World::new(None);
    let (mover, id) = w.vr("mover");
    let (observer, _) = w.guest("observer");
    w.hub.ingest_binary(&mover, &head(id, 1.0));
    let settle = w.hub.config().settle_ticks as usize;
    for _ in 0..settle + 10 {
        w.hub.tick();
    }
    let mut r = Received::default();
    drain(&observer, &mut r);
    assert_eq!(r.poses.len(), 1 + settle);
}

#[test]
fn stalled_reader_keeps_control_until_the_limit() {
    let w = World::new(None);
    let (admin, a) = w.admin();
    let (stalled, _) = w.guest("stalled");
    let mut queued_before_close = 0;
    let mut toggles = 0;
    while !stalled.is_closed() {
        queued_before_close = stalled.queued_bytes();
        w.send(&admin, Control::SetGrabEnabled { enabled: toggles % 2 == 0 });
        drain(&admin, &mut Received::default());
        toggles += 1;
        assert!(toggles < 100_000);
    }
    assert!(queued_before_close <= DEFAULT_OUTBOX_LIMIT);
    assert!(queued_before_close > DEFAULT_OUTBOX_LIMIT - 200);
    let mut r = Received::default();
    drain(&stalled, &mut r);
    assert_eq!(r.close.as_ref().map(|c| c.0), Some(CLOSE_POLICY));
    // Every queued control message survived intact and in order.
    let seqs: Vec<u64> = r.control.iter().map(|m| m.seq).collect();
    assert!(seqs.windows(2).all(|p| p[1] == p[0] + 1));
    // The stalled guest was removed from the room.
    assert_eq!(w.hub.room_state(&w.creds.room_id).unwrap().participants.len(), 1);
    let _ = a;
}

#[test]
fn poses_are_shed_before_control_under_backpressure() {
    let w = World::new(None);
    let (mover, id) = w.vr("mover");
    let (stalled, _) = w.guest("stalled");
    for k in 0..20_000 {
        w.hub.ingest_binary(&mover, &head(id, k as f32));
        w.hub.tick();
    }
    assert!(!stalled.is_closed());
    assert!(stalled.counters.pose_backpressure_drops.load(std::sync::atomic::Ordering::Relaxed) > 0);
    assert!(stalled.queued_bytes() <= DEFAULT_OUTBOX_LIMIT);
}

#[test]
fn short_binary_frame_is_dropped_and_counted() {
    let w = World::new(None);
    let (conn, _) = w.vr("p");
    w.hub.ingest_binary(&conn, &[1, 2, 3, 4, 5, 6, 7]);
    assert!(!conn.is_closed());
    let metrics = parse_metrics(&molxr::server::metrics::render(&w.hub));
    let malformed = metrics.iter().find(|s| s.name == "molxr_pose_malformed_total").unwrap();
    assert_eq!(malformed.value, 1.0);
}

#[test]
fn third_malformed_control_frame_disconnects() {
    let w = World::new(Some("demo"));
    let (conn, id) = w.vr("p");
    w.send(&conn, Control::GrabRequest { object_id: 1 });
    for k in 0..3 {
        assert!(!conn.is_closed(), "closed after {k}");
        w.hub.ingest_text(&conn, b"{not json");
    }
    assert!(conn.is_closed());
    let mut r = Received::default();
    drain(&conn, &mut r);
    assert_eq!(kinds(&r).iter().filter(|k| **k == "error").count(), 3);
    let state = w.hub.room_state(&w.creds.room_id).unwrap();
    assert!(!state.participants.contains_key(&id));
    assert_eq!(state.objects[&1].holder_id, None);
}

#[test]
fn grab_request_fans_out_the_grant() {
    let w = World::new(Some("demo"));
    let (a, pa) = w.vr("a");
    let (b, _) = w.vr("b");
    let (g, _) = w.guest("g");
    w.send(&a, Control::GrabRequest { object_id: 1 });
    w.send(&b, Control::GrabRequest { object_id: 1 });
    for (conn, expect) in [(&a, vec!["participant_joined", "participant_joined", "grab_granted"]), (&g, vec!["grab_granted"])] {
        let mut r = Received::default();
        drain(conn, &mut r);
        assert_eq!(kinds(&r), expect);
        assert!(matches!(r.control.last().unwrap().body, Control::GrabGranted { object_id: 1, holder_id } if holder_id == pa));
    }
    let mut r = Received::default();
    drain(&b, &mut r);
    assert_eq!(kinds(&r), vec!["participant_joined", "grab_granted", "grab_denied"]);
    assert!(matches!(r.control[2].body, Control::GrabDenied { object_id: 1, holder_id: Some(h) } if h == pa));
}

#[test]
fn audio_signals_are_relayed_by_role() {
    let w = World::new(None);
    let (v, pv) = w.vr("v");
    let (g, pg) = w.guest("g");
    drain(&v, &mut Received::default());
    w.send(&v, Control::AudioSignal { to_participant: pg, from_participant: None, payload: "offer".into() });
    w.send(&g, Control::AudioSignal { to_participant: pv, from_participant: None, payload: "offer".into() });
    let (mut rv, mut rg) = (Received::default(), Received::default());
    drain(&v, &mut rv);
    drain(&g, &mut rg);
    assert!(matches!(&rg.control[0].body, Control::AudioSignal { from_participant: Some(f), payload, .. } if *f == pv && payload == "offer"));
    assert!(matches!(&rg.control[1].body, Control::Error { code, .. } if code == "permission_denied"));
    assert!(rv.control.is_empty());
}

#[test]
fn unjoined_connections_cannot_act() {
    let w = World::new(Some("demo"));
    let conn = w.hub.connect();
    w.send(&conn, Control::GrabRequest { object_id: 1 });
    w.hub.ingest_binary(&conn, &head(1, 0.0));
    let mut r = Received::default();
    drain(&conn, &mut r);
    assert!(matches!(&r.control[1].body, Control::Error { code, .. } if code == "not_joined"));
}

#[test]
fn bad_code_is_rejected() {
    let w = World::new(None);
    let conn = w.hub.connect();
    w.send(&conn, Control::JoinRoom { room_id: None, code: "AAAAAA".into(), display_name: "x".into() });
    let mut r = Received::default();
    drain(&conn, &mut r);
    assert!(matches!(&r.control[1].body, Control::JoinRejected { reason } if reason == "bad_code"));
}

#[test]
fn late_joiner_gets_snapshot_and_avatars() {
    let w = World::new(Some("demo"));
    let (mover, id) = w.vr("mover");
    w.hub.ingest_binary(&mover, &head(id, 0.75));
    let late = w.hub.connect();
    w.send(&late, Control::JoinRoom { room_id: None, code: w.creds.guest_code.to_string(), display_name: "late".into() });
    let mut r = Received::default();
    drain(&late, &mut r);
    let Control::JoinAccepted { role, snapshot, .. } = &r.control[1].body else { panic!("{:?}", r.control) };
    assert_eq!(*role, Role::Passive);
    assert_eq!(snapshot.objects.len(), 2);
    assert_eq!(r.poses, vec![decode_pose(&head(id, 0.75)).unwrap()]);
}

#[test]
fn silent_client_is_swept_and_releases_its_lock() {
    let w = World::new(Some("demo"));
    let (holder, h) = w.vr("holder");
    let (alive, _) = w.vr("alive");
    w.send(&holder, Control::GrabRequest { object_id: 1 });
    let silent_since = w.clock.now();
    for _ in 0..3 {
        w.clock.advance(5_000);
        w.send(&alive, Control::Heartbeat);
        if w.clock.now() - silent_since < 15_000 {
            assert!(w.hub.heartbeat_sweep(w.hub.now()).is_empty());
        }
    }
    w.clock.advance(1_000);
    assert_eq!(w.clock.now() - silent_since, 16_000);
    let swept = w.hub.heartbeat_sweep(w.hub.now());
    assert_eq!(swept, vec![holder.id()]);
    let state = w.hub.room_state(&w.creds.room_id).unwrap();
    assert_eq!(state.objects[&1].holder_id, None);
    assert!(!state.participants.contains_key(&h));
    assert!(!alive.is_closed());
}

trait Now {
    fn now(&self) -> u64;
}

impl Now for ManualClock {
    fn now(&self) -> u64 {
        molxr::clock::Clock::now_ms(self)
    }
}

#[test]
fn heartbeating_client_is_never_swept() {
    let w = World::new(None);
    let (conn, _) = w.guest("steady");
    for _ in 0..20 {
        w.clock.advance(5_000);
        w.send(&conn, Control::Heartbeat);
        assert!(w.hub.heartbeat_sweep(w.hub.now()).is_empty());
    }
}

#[test]
fn sweep_of_empty_server_is_empty() {
    let hub = Hub::new(HubConfig::default(), Arc::new(ManualClock::new(0)));
    assert!(hub.heartbeat_sweep(1_000_000).is_empty());
}

fn sample(hub: &Hub, name: &str, conn: u64, plane: &str, direction: &str) -> f64 {
    parse_metrics(&molxr::server::metrics::render(hub))
        .into_iter()
        .find(|s| {
            s.name == name
                && s.label("conn") == Some(&conn.to_string())
                && s.label("plane") == Some(plane)
                && s.label("direction") == Some(direction)
        })
        .map(|s| s.value)
        .unwrap()
}

#[test]
fn idle_room_has_no_pose_egress() {
    let w = World::new(None);
    let (a, _) = w.vr("a");
    let (b, _) = w.guest("b");
    for _ in 0..200 {
        w.clock.advance(50);
        w.hub.tick();
        drain(&a, &mut Received::default());
        drain(&b, &mut Received::default());
    }
    for conn in [&a, &b] {
        assert_eq!(sample(&w.hub, "molxr_connection_bytes_total", conn.id(), "pose", "out"), 0.0);
    }
}

#[test]
fn observer_ingress_follows_the_tick_rate() {
    let w = World::new(None);
    let (mover, id) = w.vr("mover");
    let (observer, _) = w.guest("observer");
    let packet_len = head(id, 0.0).len() as f64;
    // 30 Hz sends and 20 Hz ticks over 10 s on a shared millisecond axis.
    let mut sends = 0;
    for t in 0..10_000u64 {
        w.clock.advance(1);
        if t * 30 / 1000 != (t + 1) * 30 / 1000 {
            w.hub.ingest_binary(&mover, &head(id, sends as f32 * 0.001));
            sends += 1;
        }
        if t % 50 == 49 {
            w.hub.tick();
            drain(&observer, &mut Received::default());
        }
    }
    assert_eq!(sends, 300);
    let expected = 20.0 * packet_len * 10.0;
    let observed = sample(&w.hub, "molxr_connection_bytes_total", observer.id(), "pose", "out");
    assert!((observed - expected).abs() <= 0.1 * expected, "observed {observed}, expected {expected}");
}

#[test]
fn counters_never_decrease() {
    let w = World::new(Some("demo"));
    let (a, id) = w.vr("a");
    let (b, _) = w.guest("b");
    let mut previous: Vec<(String, f64)> = Vec::new();
    for k in 0..50 {
        w.hub.ingest_binary(&a, &head(id, k as f32));
        if k % 7 == 0 {
            w.send(&a, Control::GrabRequest { object_id: 1 });
        }
        w.hub.tick();
        drain(&b, &mut Received::default());
        let now: Vec<(String, f64)> = parse_metrics(&molxr::server::metrics::render(&w.hub))
            .into_iter()
            .filter(|s| s.name.ends_with("_total"))
            .map(|s| (format!("{}{:?}", s.name, s.labels), s.value))
            .collect();
        for (key, value) in &previous {
            if let Some((_, v)) = now.iter().find(|(k, _)| k == key) {
                assert!(v >= value, "{key} went from {value} to {v}");
            }
        }
        previous = now;
    }
}

#[test]
fn shutdown_sends_room_closed_before_close() {
    let w = World::new(None);
    let (a, _) = w.guest("a");
    let (b, _) = w.vr("b");
    drain(&a, &mut Received::default());
    w.hub.shutdown("server shutting down");
    for conn in [&a, &b] {
        let mut out = conn.drain();
        let close = out.pop().unwrap();
        assert!(matches!(close, Outgoing::Close { .. }));
        let Outgoing::Text(last) = out.pop().unwrap() else { panic!() };
        assert!(matches!(decode_control(last.as_bytes()).unwrap().body, Control::Error { code, .. } if code == "room_closed"));
    }
    assert_eq!(w.hub.room_count(), 0);
    let late = w.hub.connect();
    assert!(late.is_closed());
}

#[test]
fn admin_grace_keeps_or_closes_the_room() {
    let w = World::new(None);
    let (admin, _) = w.admin();
    let (guest, _) = w.guest("g");
    w.hub.disconnect(&admin);
    w.clock.advance(60_000);
    assert!(w.hub.expire_rooms(w.hub.now()).is_empty());
    let (again, _) = w.admin();
    w.clock.advance(200_000);
    w.send(&guest, Control::Heartbeat);
    w.send(&again, Control::Heartbeat);
    assert!(w.hub.expire_rooms(w.hub.now()).is_empty());

    w.hub.disconnect(&again);
    w.clock.advance(120_000);
    assert_eq!(w.hub.expire_rooms(w.hub.now()), vec![w.creds.room_id.clone()]);
    let mut r = Received::default();
    drain(&guest, &mut r);
    assert!(matches!(&r.control.last().unwrap().body, Control::Error { code, .. } if code == "room_closed"));
    assert!(r.close.is_some());
}

#[test]
fn per_connection_control_sequence_is_gap_free() {
    let w = World::new(Some("demo"));
    let (a, _) = w.admin();
    let (v, _) = w.vr("v");
    for k in 0..20 {
        w.send(&a, Control::SetGrabEnabled { enabled: k % 2 == 0 });
        w.send(&v, Control::GrabRequest { object_id: 2 });
    }
    let mut r = Received::default();
    drain(&v, &mut r);
    // Hello and JoinAccepted were drained during the join.
    assert_eq!(r.control[0].seq, 2);
    for pair in r.control.windows(2) {
        assert_eq!(pair[1].seq, pair[0].seq + 1);
    }
}
