use std::collections::BTreeSet;
use std::sync::Arc;

use tokio::task::JoinHandle;
use tokio::time::{sleep_until, Duration, Instant};

use super::audit::{assert_convergence, check_invariants, grab_epochs, order_violations};
use super::client::{ClientView, SyntheticClient};
use super::report::{Assertion, ClientReport, ReplayReport, ScenarioReport, TrafficReport};
use super::scenario::{Action, CirclePath, ScenarioSpec, TimedAction};
use super::shaper::NetworkProfile;
use super::HarnessError;
use crate::clock::{Clock, SystemClock};
use crate::protocol::{AvatarPose, Control, PosePacket, RigidPose, Role, Transform, UnitQuat, Vec3, MAX_POSE_PACKET_LEN};
use crate::server::{parse_metrics, Sample, ADMIN_TOKEN_HEADER};
use crate::session::{replay, EventRecord, RoomEvent, RoomState, DEFAULT_PARTICIPANT_CAP};

/// Slack allowed over the raw pose payload bound for framing.
pub const BANDWIDTH_OVERHEAD: f64 = 1.1;

const SETUP_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Clone)]
pub struct RunOptions {
    pub seed: u64,
    /// Stamps client logs.
    pub clock: Arc<dyn Clock>,
}

impl RunOptions {
    pub fn seeded(seed: u64) -> Self {
        Self { seed, clock: Arc::new(SystemClock) }
    }
}

/// Runs a scenario and fails with [`HarnessError::AssertionFailed`] if any
/// expectation is not met.
pub async fn run_scenario(spec: &ScenarioSpec, server: &str, options: &RunOptions) -> Result<ScenarioReport, HarnessError> {
    let report = evaluate_scenario(spec, server, options).await?;
    if report.passed {
        Ok(report)
    } else {
        let trace = report.trace.clone();
        Err(HarnessError::AssertionFailed { report: Box::new(report), trace })
    }
}

/// Runs a scenario and returns its report whether or not it passed. Errors
/// are reserved for runs that could not complete.
pub async fn evaluate_scenario(spec: &ScenarioSpec, server: &str, options: &RunOptions) -> Result<ScenarioReport, HarnessError> {
    spec.validate()?;
    let limit = Duration::from_millis(spec.timeout_ms);
    match tokio::time::timeout(limit, execute(spec, server, options)).await {
        Ok(result) => result,
        Err(_) => Err(HarnessError::ScenarioTimeout(format!("`{}` exceeded {} ms", spec.name, spec.timeout_ms))),
    }
}

/// Splits a server address into its HTTP base and websocket URL.
pub fn endpoints(server: &str) -> (String, String) {
    let trimmed = server.trim_end_matches('/');
    let trimmed = trimmed.strip_suffix("/ws").unwrap_or(trimmed);
    let http = if let Some(rest) = trimmed.strip_prefix("ws://") {
        format!("http://{rest}")
    } else if let Some(rest) = trimmed.strip_prefix("wss://") {
        format!("https://{rest}")
    } else if trimmed.contains("://") {
        trimmed.to_owned()
    } else {
        format!("http://{trimmed}")
    };
    let ws = if let Some(rest) = http.strip_prefix("https://") {
        format!("wss://{rest}/ws")
    } else {
        format!("ws://{}/ws", http.trim_start_matches("http://"))
    };
    (http, ws)
}

struct Credentials {
    room_id: String,
    admin_token: String,
    vr_code: String,
    guest_code: String,
}

impl Credentials {
    fn code(&self, role: Role) -> &str {
        match role {
            Role::Admin => &self.admin_token,
            Role::VrActive => &self.vr_code,
            Role::Passive => &self.guest_code,
        }
    }
}

struct Member {
    client: Arc<SyntheticClient>,
    group: usize,
    display_name: String,
}

struct Http {
    base: String,
    client: reqwest::Client,
}

impl Http {
    async fn metrics(&self) -> Result<Vec<Sample>, HarnessError> {
        let text = self
            .client
            .get(format!("{}/metrics", self.base))
            .send()
            .await
            .and_then(|r| r.error_for_status())
            .map_err(|e| HarnessError::Http(e.to_string()))?
            .text()
            .await
            .map_err(|e| HarnessError::Http(e.to_string()))?;
        Ok(parse_metrics(&text))
    }

    async fn admin_json<T: serde::de::DeserializeOwned>(&self, path: &str, token: &str) -> Result<T, HarnessError> {
        self.client
            .get(format!("{}{path}", self.base))
            .header(ADMIN_TOKEN_HEADER, token)
            .send()
            .await
            .and_then(|r| r.error_for_status())
            .map_err(|e| HarnessError::Http(format!("{path}: {e}")))?
            .json()
            .await
            .map_err(|e| HarnessError::Http(format!("{path}: {e}")))
    }
}

fn counter(samples: &[Sample], name: &str) -> u64 {
    samples.iter().filter(|s| s.name == name).map(|s| s.value as u64).sum()
}

fn connection_pose_out(samples: &[Sample], conn: u64) -> Option<u64> {
    let conn = conn.to_string();
    samples
        .iter()
        .find(|s| {
            s.name == "molxr_connection_bytes_total"
                && s.label("conn") == Some(conn.as_str())
                && s.label("plane") == Some("pose")
                && s.label("direction") == Some("out")
        })
        .map(|s| s.value as u64)
}

fn plane_total(samples: &[Sample], plane: &str, direction: &str) -> u64 {
    samples
        .iter()
        .filter(|s| s.name == "molxr_bytes_total" && s.label("plane") == Some(plane) && s.label("direction") == Some(direction))
        .map(|s| s.value as u64)
        .sum()
}

fn client_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

async fn execute(spec: &ScenarioSpec, server: &str, options: &RunOptions) -> Result<ScenarioReport, HarnessError> {
    let started = Instant::now();
    let (base, ws) = endpoints(server);
    let http = Http { base: base.clone(), client: reqwest::Client::new() };

    let control = SyntheticClient::connect(&ws, "harness", Role::Admin, NetworkProfile::default(), options.seed, options.clock.clone()).await?;
    control.send_control(Control::CreateRoom { preset_id: spec.preset.clone() })?;
    let creds = match control
        .wait_for_control(SETUP_TIMEOUT, |c| matches!(c, Control::RoomCreated { .. } | Control::Error { .. }))
        .await?
    {
        Control::RoomCreated { room_id, admin_token, vr_code, guest_code } => Credentials { room_id, admin_token, vr_code, guest_code },
        other => return Err(HarnessError::CreateRoom(format!("{other:?}"))),
    };

    let mut members = Vec::new();
    for (g, group) in spec.groups.iter().enumerate() {
        let profile = group.network.unwrap_or(spec.network);
        for k in 0..group.count {
            let index = members.len();
            let display_name = if group.count == 1 { group.name.clone() } else { format!("{}-{k}", group.name) };
            let client = SyntheticClient::connect(&ws, display_name.clone(), group.role, profile, client_seed(options.seed, index), options.clock.clone()).await?;
            members.push(Member { client: Arc::new(client), group: g, display_name });
        }
    }

    let early: Vec<&Member> = members.iter().filter(|m| !spec.groups[m.group].joins_late()).collect();
    let joins = early.iter().map(|m| {
        let role = spec.groups[m.group].role;
        m.client.join(Some(creds.room_id.clone()), creds.code(role), &m.display_name, SETUP_TIMEOUT)
    });
    for result in futures::future::join_all(joins).await {
        result?;
    }
    let deadline = Instant::now() + SETUP_TIMEOUT;
    while early.iter().any(|m| m.client.participant_count() < early.len()) {
        if Instant::now() >= deadline {
            return Err(HarnessError::ScenarioTimeout("waiting for join announcements".into()));
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }

    let baseline = http.metrics().await?;
    let t0 = Instant::now() + Duration::from_millis(20);
    let ctx = Arc::new(ScriptContext { t0, creds });
    let creds = &ctx.creds;
    let total = members.len() as f64;
    let scripts: Vec<JoinHandle<Result<(), HarnessError>>> = members
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let group = &spec.groups[m.group];
            tokio::spawn(run_script(m.client.clone(), group.role, m.display_name.clone(), group.actions.clone(), ctx.clone(), i as f64 / total))
        })
        .collect();

    let window = spec.steady.map(|w| {
        let http = Http { base: base.clone(), client: http.client.clone() };
        tokio::spawn(async move {
            sleep_until(t0 + Duration::from_millis(w.from_ms)).await;
            let first = http.metrics().await?;
            let first_at = Instant::now();
            sleep_until(t0 + Duration::from_millis(w.to_ms)).await;
            let second = http.metrics().await?;
            Ok::<_, HarnessError>((first, first_at, second, Instant::now()))
        })
    });

    for script in scripts {
        script.await.map_err(|e| HarnessError::Io(format!("script task: {e}")))??;
    }
    let window = match window {
        Some(task) => Some(task.await.map_err(|e| HarnessError::Io(format!("window task: {e}")))??),
        None => None,
    };
    tokio::time::sleep(Duration::from_millis(spec.quiescence_ms)).await;

    let log: Vec<EventRecord> = http.admin_json(&format!("/rooms/{}/log", creds.room_id), &creds.admin_token).await?;
    let server_state: RoomState = http.admin_json(&format!("/rooms/{}/state", creds.room_id), &creds.admin_token).await?;
    let final_metrics = http.metrics().await?;
    let wall_ms = started.elapsed().as_millis() as u64;
    let views: Vec<ClientView> = members.iter().map(|m| m.client.view()).collect();

    let shutdowns = members.into_iter().filter_map(|m| Arc::into_inner(m.client)).map(|c| c.shutdown(Duration::from_secs(1)));
    futures::future::join_all(shutdowns).await;
    control.shutdown(Duration::from_secs(1)).await;

    let groups_of: Vec<usize> = spec.groups.iter().enumerate().flat_map(|(g, group)| std::iter::repeat_n(g, group.count)).collect();
    Ok(assess(spec, options.seed, &base, &creds.room_id, wall_ms, &log, &server_state, &views, &groups_of, &baseline, &final_metrics, window.as_ref()))
}

type Window = (Vec<Sample>, Instant, Vec<Sample>, Instant);

#[allow(clippy::too_many_arguments)]
fn assess(
    spec: &ScenarioSpec,
    seed: u64,
    server: &str,
    room_id: &str,
    wall_ms: u64,
    log: &[EventRecord],
    server_state: &RoomState,
    views: &[ClientView],
    groups_of: &[usize],
    baseline: &[Sample],
    final_metrics: &[Sample],
    window: Option<&Window>,
) -> ScenarioReport {
    let expect = &spec.expect;
    let mut assertions = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        assertions.push(Assertion { name: name.to_owned(), passed, detail });
    };

    let convergence = assert_convergence(server_state, views, expect.convergence_epsilon);
    check(
        "convergence",
        convergence.passed(),
        if convergence.passed() {
            format!("max error {:.3e} <= {:.0e}", convergence.max_error, expect.convergence_epsilon)
        } else {
            format!("{} failing subjects, first: {}", convergence.failing.len(), convergence.failing[0])
        },
    );

    let replay_report = match replay(log) {
        Ok(state) if state == *server_state => ReplayReport { events: log.len(), matches: true, detail: String::new() },
        Ok(_) => ReplayReport { events: log.len(), matches: false, detail: "replayed state differs from the live state".into() },
        Err(e) => ReplayReport { events: log.len(), matches: false, detail: e.to_string() },
    };
    if expect.replay_matches {
        let detail = if replay_report.matches { format!("{} events", log.len()) } else { replay_report.detail.clone() };
        check("replay", replay_report.matches, detail);
    }

    let violations = check_invariants(log, DEFAULT_PARTICIPANT_CAP);
    let invariant_violations: Vec<String> = violations.iter().map(|v| format!("seq {}: {}", v.seq, v.detail)).collect();
    if expect.invariants {
        check("invariants", violations.is_empty(), invariant_violations.first().cloned().unwrap_or_else(|| "every prefix holds".into()));
    }

    let order = order_violations(log, views);
    if expect.order {
        check("order", order.is_empty(), order.first().cloned().unwrap_or_else(|| "per-client delivery matches log order".into()));
    }

    let grabs = grab_epochs(log, views);
    if let Some(n) = expect.grants {
        check("grants", grabs.grants == n && grabs.double_holds == 0, format!("{} granted, expected {n}", grabs.grants));
    }
    if let Some(n) = expect.denials {
        let holders: BTreeSet<u16> = log
            .iter()
            .filter_map(|r| match r.event {
                RoomEvent::GrabGranted { holder_id, .. } => Some(holder_id),
                _ => None,
            })
            .collect();
        let same = grabs.denial_holders.iter().all(|h| holders.contains(h));
        check(
            "denials",
            grabs.denials == n && same,
            format!("{} denied naming {:?}, expected {n} naming the holder", grabs.denials, grabs.denial_holders),
        );
    }

    let asset_bytes = counter(final_metrics, "molxr_asset_bytes_served_total").saturating_sub(counter(baseline, "molxr_asset_bytes_served_total"));
    if expect.zero_asset_bytes {
        check("zero_asset_bytes", asset_bytes == 0, format!("{asset_bytes} asset bytes served after join"));
    }
    let pose_in = plane_total(final_metrics, "pose", "in").saturating_sub(plane_total(baseline, "pose", "in"));
    let pose_out = plane_total(final_metrics, "pose", "out").saturating_sub(plane_total(baseline, "pose", "out"));
    if expect.zero_pose_bytes {
        let client_bytes: u64 = views.iter().map(|v| v.counters.pose_in.bytes + v.counters.pose_out.bytes).sum();
        check(
            "zero_pose_bytes",
            pose_in == 0 && pose_out == 0 && client_bytes == 0,
            format!("server {pose_in} B in / {pose_out} B out, clients {client_bytes} B"),
        );
    }

    let mut rates = vec![None; views.len()];
    let mut bounds = vec![None; views.len()];
    let mut window_ms = 0;
    if let (Some(w), Some((first, first_at, second, second_at))) = (spec.steady, window) {
        window_ms = second_at.duration_since(*first_at).as_millis() as u64;
        let secs = second_at.duration_since(*first_at).as_secs_f64();
        let motion: Vec<(bool, Vec<u16>)> = groups_of.iter().map(|g| spec.groups[*g].moving_in(w.from_ms, w.to_ms)).collect();
        let scripted_objects: BTreeSet<u16> = motion.iter().flat_map(|m| m.1.iter().copied()).collect();
        let mut worst = String::new();
        let mut ok = true;
        for (i, view) in views.iter().enumerate() {
            if view.disconnected {
                continue;
            }
            let avatars = motion.iter().enumerate().filter(|(j, m)| *j != i && m.0 && !views[*j].disconnected).count();
            let objects = scripted_objects.iter().filter(|o| !moved_only_by(log, **o, view.participant_id())).count();
            let moving = avatars + objects;
            let bound = spec.tick_hz as f64 * moving as f64 * MAX_POSE_PACKET_LEN as f64 * BANDWIDTH_OVERHEAD;
            let measured = view.connection_id.and_then(|c| Some((connection_pose_out(first, c)?, connection_pose_out(second, c)?)));
            let rate = match measured {
                Some((a, b)) if secs > 0.0 => b.saturating_sub(a) as f64 / secs,
                _ => f64::INFINITY,
            };
            rates[i] = Some(rate);
            bounds[i] = Some(bound);
            if rate > bound {
                ok = false;
                if worst.is_empty() {
                    worst = format!("{}: {rate:.0} B/s > {bound:.0} B/s", view.name);
                }
            }
        }
        if expect.bandwidth {
            let detail = if ok {
                let peak = rates.iter().flatten().zip(bounds.iter().flatten()).map(|(r, b)| r / b).fold(0.0, f64::max);
                format!("peak {:.0}% of bound over {window_ms} ms", peak * 100.0)
            } else {
                worst
            };
            check("bandwidth", ok, detail);
        }
    } else if expect.bandwidth {
        check("bandwidth", false, "no steady window configured".into());
    }

    if let Some(max) = expect.max_wall_ms {
        check("wall_time", wall_ms <= max, format!("{wall_ms} ms of {max} ms"));
    }

    let clients = views
        .iter()
        .enumerate()
        .map(|(i, v)| ClientReport {
            name: v.name.clone(),
            role: v.role,
            participant_id: v.participant_id(),
            connection_id: v.connection_id,
            disconnected: v.disconnected,
            convergence_error: convergence.per_client.get(&v.name).copied().unwrap_or(0.0),
            control_in_bytes: v.counters.control_in.bytes,
            control_out_bytes: v.counters.control_out.bytes,
            pose_in_bytes: v.counters.pose_in.bytes,
            pose_out_bytes: v.counters.pose_out.bytes,
            pose_frames_in: v.counters.pose_in.frames,
            pose_frames_dropped: v.counters.pose_dropped,
            control_messages: v.log.len() as u64,
            steady_pose_rate: rates[i],
            steady_pose_bound: bounds[i],
        })
        .collect();

    let passed = assertions.iter().all(|a| a.passed);
    let mut trace = Vec::new();
    if !passed {
        trace = failure_trace(&assertions, &violations, log);
    }
    ScenarioReport {
        scenario: spec.name.clone(),
        seed,
        server: server.to_owned(),
        room_id: room_id.to_owned(),
        passed,
        wall_ms,
        assertions,
        convergence,
        replay: replay_report,
        invariant_violations,
        order_violations: order,
        grabs,
        traffic: TrafficReport { window_ms, asset_bytes_after_join: asset_bytes, pose_bytes_in: pose_in, pose_bytes_out: pose_out },
        clients,
        trace,
    }
}

/// True if every logged move of `object` came from `participant`, so its
/// poses are never fanned out back to that participant.
fn moved_only_by(log: &[EventRecord], object: u16, participant: Option<u16>) -> bool {
    let mut movers = log.iter().filter_map(|r| match r.event {
        RoomEvent::ObjectMoved { object_id, by, .. } if object_id == object => Some(by),
        _ => None,
    });
    participant.is_some() && movers.all(|by| Some(by) == participant)
}

/// The failing assertions, plus the log records leading up to the first
/// invariant violation.
fn failure_trace(assertions: &[Assertion], violations: &[super::audit::Violation], log: &[EventRecord]) -> Vec<String> {
    let mut trace: Vec<String> = assertions.iter().filter(|a| !a.passed).map(|a| format!("{}: {}", a.name, a.detail)).collect();
    if let Some(first) = violations.first() {
        let end = log.iter().position(|r| r.seq == first.seq).map_or(log.len(), |p| p + 1);
        for record in &log[end.saturating_sub(8)..end] {
            trace.push(serde_json::to_string(record).unwrap_or_default());
        }
    }
    trace
}

struct ScriptContext {
    t0: Instant,
    creds: Credentials,
}

impl ScriptContext {
    fn at(&self, ms: f64) -> Instant {
        self.t0 + Duration::from_secs_f64(ms.max(0.0) / 1000.0)
    }
}

async fn run_script(
    client: Arc<SyntheticClient>,
    role: Role,
    name: String,
    actions: Vec<TimedAction>,
    ctx: Arc<ScriptContext>,
    phase: f64,
) -> Result<(), HarnessError> {
    let mut streams = Vec::new();
    for step in actions {
        sleep_until(ctx.at(step.at_ms as f64)).await;
        if client.is_closing() {
            break;
        }
        let sent = match step.action {
            Action::Join => client.join(Some(ctx.creds.room_id.clone()), ctx.creds.code(role), &name, SETUP_TIMEOUT).await.map(|_| ()),
            Action::Move { until_ms, hz, path, hands } => {
                streams.push(tokio::spawn(stream_avatar(client.clone(), ctx.clone(), step.at_ms, until_ms, hz, path, hands, phase)));
                Ok(())
            }
            Action::MoveObject { object, until_ms, hz, path } => {
                streams.push(tokio::spawn(stream_object(client.clone(), ctx.clone(), object, step.at_ms, until_ms, hz, path, phase)));
                Ok(())
            }
            Action::Grab { object } => client.send_control(Control::GrabRequest { object_id: object }),
            Action::Release { object } if client.holds(object) => client.send_control(Control::GrabRelease { object_id: object }),
            Action::Release { .. } => Ok(()),
            Action::SetGrab { enabled } => client.send_control(Control::SetGrabEnabled { enabled }),
            Action::AddObject { asset_url, label, position } => client.send_control(Control::AddObject {
                object_id: None,
                asset_url,
                label,
                initial_transform: Transform::at(Vec3::from(position)),
            }),
            Action::RemoveObject { object } => client.send_control(Control::RemoveObject { object_id: object }),
            Action::Disconnect => {
                client.disconnect();
                Ok(())
            }
        };
        match sent {
            Err(HarnessError::Disconnected(_)) => break,
            other => other?,
        }
    }
    for stream in streams {
        let _ = stream.await;
    }
    Ok(())
}

fn yaw(angle: f64) -> UnitQuat {
    UnitQuat::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), angle)
}

fn offset(p: Vec3, dx: f32, dy: f32) -> Vec3 {
    Vec3::new(p.x + dx, p.y + dy, p.z)
}

#[allow(clippy::too_many_arguments)]
async fn stream_avatar(client: Arc<SyntheticClient>, ctx: Arc<ScriptContext>, from_ms: u64, until_ms: u64, hz: u32, path: CirclePath, hands: bool, phase: f64) {
    let step = 1000.0 / hz as f64;
    let mut k = 0u64;
    loop {
        let t = from_ms as f64 + k as f64 * step;
        if t >= until_ms as f64 {
            break;
        }
        k += 1;
        sleep_until(ctx.at(t)).await;
        let Some(pid) = client.participant_id() else { continue };
        let (position, angle) = path.sample(t / 1000.0, phase);
        let head = RigidPose::new(position, yaw(angle));
        let pose = if hands {
            AvatarPose {
                head,
                left_hand: Some(RigidPose::new(offset(position, -0.2, -0.3), yaw(angle + 0.3))),
                right_hand: Some(RigidPose::new(offset(position, 0.2, -0.3), yaw(angle - 0.3))),
            }
        } else {
            AvatarPose::head_only(head)
        };
        if client.send_pose(&PosePacket::Avatar { participant_id: pid, pose }).is_err() {
            break;
        }
    }
}

#[allow(clippy::too_many_arguments)]
async fn stream_object(client: Arc<SyntheticClient>, ctx: Arc<ScriptContext>, object: u16, from_ms: u64, until_ms: u64, hz: u32, path: CirclePath, phase: f64) {
    let step = 1000.0 / hz as f64;
    let mut k = 0u64;
    loop {
        let t = from_ms as f64 + k as f64 * step;
        if t >= until_ms as f64 {
            break;
        }
        k += 1;
        sleep_until(ctx.at(t)).await;
        if !client.holds(object) {
            continue;
        }
        let Some(scale) = client.object_scale(object) else { continue };
        let (position, angle) = path.sample(t / 1000.0, phase);
        let transform = Transform { position, orientation: yaw(angle), scale };
        if client.send_pose(&PosePacket::Object { object_id: object, transform }).is_err() {
            break;
        }
    }
}
