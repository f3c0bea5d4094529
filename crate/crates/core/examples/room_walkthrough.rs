//! A room's life in the session core, with no network involved: invite
//! codes, roles, the grab lock, the Admin's grab switch and replay.

use molxr::content::{starter_manifest, AcceptAll};
use molxr::protocol::{PosePacket, Transform, Vec3};
use molxr::session::{permits, replay, Action, GrabOutcome, Lobby, LobbyConfig};

fn main() {
    let presets = starter_manifest();
    let demo = presets.iter().find(|p| p.preset_id == "demo").unwrap();
    let mut lobby = Lobby::new(LobbyConfig::default());
    let creds = lobby.create_room(Some(demo), 0).unwrap();
    println!("room {}  vr code {}  guest code {}", creds.room_id, creds.vr_code.as_str(), creds.guest_code.as_str());

    let room = lobby.room_mut(&creds.room_id).unwrap();
    let (admin, _) = room.join(&creds.admin_token, "Ada", 10).unwrap();
    let (alice, _) = room.join(creds.vr_code.as_str(), "Alice", 20).unwrap();
    let (bob, _) = room.join(creds.vr_code.as_str(), "Bob", 30).unwrap();
    let (guest, _) = room.join(creds.guest_code.as_str(), "Guest", 40).unwrap();
    for p in [&admin, &alice, &guest] {
        let allowed: Vec<_> = Action::ALL.into_iter().filter(|a| permits(p.role, *a)).collect();
        println!("{:<6} {:<9} may {allowed:?}", p.display_name, p.role.to_string());
    }

    match room.request_grab(alice.participant_id, 1, 100).unwrap() {
        GrabOutcome::Granted(_) => println!("Alice holds object 1"),
        GrabOutcome::Denied { holder_id } => println!("denied, held by {holder_id:?}"),
    }
    if let GrabOutcome::Denied { holder_id } = room.request_grab(bob.participant_id, 1, 101).unwrap() {
        println!("Bob is denied, object 1 is held by participant {}", holder_id.unwrap());
    }
    let moved = PosePacket::Object { object_id: 1, transform: Transform::at(Vec3::new(0.5, 1.2, -0.8)) };
    println!("Alice moves it, accepted: {}", room.apply_object_transform(alice.participant_id, &moved, 120).accepted());
    println!("Bob tries the same: {:?}", room.apply_object_transform(bob.participant_id, &moved, 121));
    println!("Guest tries to grab: {:?}", room.request_grab(guest.participant_id, 2, 122).unwrap());

    let released = room.set_grab_enabled(admin.participant_id, false, 200).unwrap();
    println!("grabbing disabled, {} events logged (releases first)", released.len());
    room.add_object(admin.participant_id, "https://example.org/caffeine.glb", "Caffeine", Transform::IDENTITY, &AcceptAll, 210)
        .unwrap();
    room.handle_disconnect(bob.participant_id, 300).unwrap();

    let log = room.log();
    println!("{} events; replay matches live state: {}", log.len(), replay(log).unwrap() == *room.state());
    for record in log.iter().rev().take(4).rev() {
        println!("  #{:<3} t={:<4} {:?}", record.seq, record.at, record.event);
    }
}
