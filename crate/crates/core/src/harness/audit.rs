//! Offline checks over a finished run: convergence of every client view
//! to the server state, an independent invariant checker over the event
//! log, grab-lock epochs, and per-client delivery order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::client::ClientView;
use crate::protocol::{Control, Role};
use crate::session::{permits, Action, EventRecord, RoomEvent, RoomState};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub epsilon: f64,
    pub max_error: f64,
    pub subjects: usize,
    /// `client: subject` entries that exceed epsilon or disagree in
    /// structure.
    pub failing: Vec<String>,
    pub per_client: BTreeMap<String, f64>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.failing.is_empty()
    }
}

/// Compares every still-connected client's view with the server state.
/// A client without a snapshot is a failing subject.
pub fn assert_convergence(server: &RoomState, clients: &[ClientView], epsilon: f64) -> ConvergenceReport {
    let mut report = ConvergenceReport { epsilon, ..ConvergenceReport::default() };
    let avatars: Vec<_> = server.participants.values().filter_map(|p| p.last_pose.map(|pose| (p.participant_id, pose))).collect();
    report.subjects = server.objects.len() + avatars.len();
    for client in clients.iter().filter(|c| !c.disconnected) {
        let mut worst = 0.0f64;
        let mut fail = |what: String, err: f64, worst: &mut f64| {
            *worst = worst.max(err);
            report.failing.push(format!("{}: {what}", client.name));
        };
        let replica = &client.replica;
        if !replica.has_snapshot() {
            fail("no snapshot".into(), f64::INFINITY, &mut worst);
            report.per_client.insert(client.name.clone(), worst);
            report.max_error = report.max_error.max(worst);
            continue;
        }
        if replica.grab_enabled != server.grab_enabled {
            fail("grab_enabled".into(), f64::INFINITY, &mut worst);
        }
        let expected: Vec<_> = server.participants.values().map(|p| p.info()).collect();
        let seen: Vec<_> = replica.participants.values().cloned().collect();
        if expected != seen {
            fail("participant list".into(), f64::INFINITY, &mut worst);
        }
        let ids: BTreeSet<u16> = replica.objects.keys().copied().collect();
        for extra in ids.difference(&server.objects.keys().copied().collect()) {
            fail(format!("object {extra} does not exist"), f64::INFINITY, &mut worst);
        }
        for (id, object) in &server.objects {
            let Some(mine) = replica.objects.get(id) else {
                fail(format!("object {id} missing"), f64::INFINITY, &mut worst);
                continue;
            };
            if mine.holder_id != object.holder_id || mine.asset_url != object.asset_url || mine.label != object.label {
                fail(format!("object {id} record"), f64::INFINITY, &mut worst);
            }
            let err = mine.transform.distance(&object.transform);
            if err > epsilon || err.is_nan() {
                fail(format!("object {id} transform (error {err:.3e})"), err, &mut worst);
            } else {
                worst = worst.max(err);
            }
        }
        for (id, pose) in &avatars {
            match replica.avatars.get(id) {
                None => fail(format!("avatar {id} missing"), f64::INFINITY, &mut worst),
                Some(mine) => {
                    let err = mine.distance(pose);
                    if err > epsilon || err.is_nan() {
                        fail(format!("avatar {id} pose (error {err:.3e})"), err, &mut worst);
                    } else {
                        worst = worst.max(err);
                    }
                }
            }
        }
        for id in replica.avatars.keys().filter(|id| !avatars.iter().any(|(a, _)| a == *id)) {
            fail(format!("avatar {id} should not exist"), f64::INFINITY, &mut worst);
        }
        report.per_client.insert(client.name.clone(), worst);
        report.max_error = report.max_error.max(worst);
    }
    report
}

/// One invariant breach found by [`check_invariants`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub seq: u64,
    pub detail: String,
}

/// Re-walks the log with a minimal model of its own and checks lock
/// exclusivity, the single-Admin rule, the role matrix and the participant
/// cap after every event.
pub fn check_invariants(log: &[EventRecord], participant_cap: usize) -> Vec<Violation> {
    let mut roles: BTreeMap<u16, Role> = BTreeMap::new();
    let mut holders: BTreeMap<u16, Option<u16>> = BTreeMap::new();
    let mut grab_enabled = true;
    let mut out = Vec::new();
    for record in log {
        let mut bad = |detail: String| out.push(Violation { seq: record.seq, detail });
        match &record.event {
            RoomEvent::RoomOpened { objects, .. } => {
                holders = objects.iter().map(|o| (o.object_id, None)).collect();
            }
            RoomEvent::ParticipantJoined { participant } => {
                if roles.insert(participant.participant_id, participant.role).is_some() {
                    bad(format!("participant {} joined twice", participant.participant_id));
                }
            }
            RoomEvent::ParticipantLeft { participant } => {
                let id = participant.participant_id;
                if roles.remove(&id).is_none() {
                    bad(format!("participant {id} left without joining"));
                }
                if holders.values().any(|h| *h == Some(id)) {
                    bad(format!("participant {id} left while holding an object"));
                }
            }
            RoomEvent::ObjectAdded { object } => {
                if holders.insert(object.object_id, None).is_some() {
                    bad(format!("object {} added twice", object.object_id));
                }
            }
            RoomEvent::ObjectRemoved { object_id } => match holders.remove(object_id) {
                None => bad(format!("object {object_id} removed but absent")),
                Some(Some(h)) => bad(format!("object {object_id} removed while held by {h}")),
                Some(None) => {}
            },
            RoomEvent::GrabEnabledSet { enabled } => {
                grab_enabled = *enabled;
                if !enabled && holders.values().any(Option::is_some) {
                    bad("grabbing disabled while objects are held".into());
                }
            }
            RoomEvent::GrabGranted { object_id, holder_id } => {
                if !grab_enabled {
                    bad(format!("object {object_id} granted while grabbing is disabled"));
                }
                match roles.get(holder_id) {
                    None => bad(format!("object {object_id} granted to absent participant {holder_id}")),
                    Some(role) if !permits(*role, Action::GrabObject) => {
                        bad(format!("object {object_id} granted to {} participant {holder_id}", role.as_str()))
                    }
                    _ => {}
                }
                match holders.get_mut(object_id) {
                    None => bad(format!("object {object_id} granted but absent")),
                    Some(Some(h)) => bad(format!("object {object_id} granted to {holder_id} while held by {h}")),
                    Some(slot) => *slot = Some(*holder_id),
                }
            }
            RoomEvent::GrabReleased { object_id, holder_id } => match holders.get_mut(object_id) {
                Some(slot) if *slot == Some(*holder_id) => *slot = None,
                _ => bad(format!("object {object_id} released by non-holder {holder_id}")),
            },
            RoomEvent::ObjectMoved { object_id, by, .. } => {
                if holders.get(object_id) != Some(&Some(*by)) {
                    bad(format!("object {object_id} moved by non-holder {by}"));
                }
                if !roles.get(by).is_some_and(|r| permits(*r, Action::TransformHeldObject)) {
                    bad(format!("object {object_id} moved by participant {by} without permission"));
                }
            }
            RoomEvent::AvatarMoved { participant_id, .. } => {
                if !roles.contains_key(participant_id) {
                    bad(format!("avatar of absent participant {participant_id} moved"));
                }
            }
            RoomEvent::AdminGraceStarted { .. } | RoomEvent::RoomClosed { .. } => {}
        }
        let admins = roles.values().filter(|r| **r == Role::Admin).count();
        if admins > 1 {
            out.push(Violation { seq: record.seq, detail: format!("{admins} admins present") });
        }
        if roles.len() > participant_cap {
            out.push(Violation { seq: record.seq, detail: format!("{} participants exceed the cap", roles.len()) });
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrabReport {
    /// Grants in the server log.
    pub grants: u64,
    /// Denials received across all clients.
    pub denials: u64,
    /// Distinct holders named by those denials.
    pub denial_holders: Vec<u16>,
    /// Completed or open hold intervals per object.
    pub epochs: BTreeMap<u16, u64>,
    /// Grants issued while the object was already held.
    pub double_holds: u64,
}

/// Splits the log into hold epochs per object and counts overlaps.
pub fn grab_epochs(log: &[EventRecord], clients: &[ClientView]) -> GrabReport {
    let mut report = GrabReport::default();
    let mut held: BTreeMap<u16, u16> = BTreeMap::new();
    for record in log {
        match &record.event {
            RoomEvent::GrabGranted { object_id, holder_id } => {
                report.grants += 1;
                *report.epochs.entry(*object_id).or_default() += 1;
                if held.insert(*object_id, *holder_id).is_some() {
                    report.double_holds += 1;
                }
            }
            RoomEvent::GrabReleased { object_id, .. } | RoomEvent::ObjectRemoved { object_id } => {
                held.remove(object_id);
            }
            _ => {}
        }
    }
    let mut holders = BTreeSet::new();
    for entry in clients.iter().flat_map(|c| &c.log) {
        if let Control::GrabDenied { holder_id, .. } = &entry.body {
            report.denials += 1;
            if let Some(h) = holder_id {
                holders.insert(*h);
            }
        }
    }
    report.denial_holders = holders.into_iter().collect();
    report
}

fn is_announcement(body: &Control) -> bool {
    match body {
        Control::ParticipantJoined { .. }
        | Control::ParticipantLeft { .. }
        | Control::RemoveObject { .. }
        | Control::SetGrabEnabled { .. }
        | Control::GrabGranted { .. }
        | Control::GrabRelease { .. } => true,
        Control::AddObject { object_id, .. } => object_id.is_some(),
        Control::Error { code, .. } => code == "room_closed",
        _ => false,
    }
}

/// Checks that each client's control sequence numbers are gap-free from
/// zero and that, from its own join onward, it received exactly the
/// server's announcements in log order (a prefix of them if it left early).
pub fn order_violations(log: &[EventRecord], clients: &[ClientView]) -> Vec<String> {
    let mut out = Vec::new();
    for client in clients {
        for (k, entry) in client.log.iter().enumerate() {
            if entry.seq != k as u64 {
                out.push(format!("{}: control seq {} at position {k}", client.name, entry.seq));
                break;
            }
        }
        let Some(me) = client.participant_id() else { continue };
        let Some(joined) = log.iter().position(|r| matches!(&r.event, RoomEvent::ParticipantJoined { participant } if participant.participant_id == me)) else {
            out.push(format!("{}: participant {me} never joined in the log", client.name));
            continue;
        };
        let expected: Vec<Control> = log[joined + 1..].iter().filter_map(|r| r.event.announcement()).collect();
        let Some(accepted) = client.log.iter().position(|e| matches!(e.body, Control::JoinAccepted { .. })) else { continue };
        let received: Vec<&Control> = client.log[accepted + 1..].iter().map(|e| &e.body).filter(|b| is_announcement(b)).collect();
        if received.len() > expected.len() {
            out.push(format!("{}: {} announcements received, {} sent", client.name, received.len(), expected.len()));
            continue;
        }
        if let Some(k) = received.iter().zip(&expected).position(|(r, e)| *r != e) {
            out.push(format!("{}: announcement {k} is {} but the log has {}", client.name, received[k].kind(), expected[k].kind()));
            continue;
        }
        if !client.disconnected && received.len() != expected.len() {
            out.push(format!("{}: missed {} announcements", client.name, expected.len() - received.len()));
        }
    }
    out
}
