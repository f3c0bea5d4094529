use std::path::PathBuf;
use std::time::Duration;

use molxr::harness::{
    evaluate_scenario, harness_main, read_event_log, replay, replay_file, run_scenario, HarnessError, RunOptions,
    ScenarioReport, ScenarioSpec,
};
use molxr::server::{start, RunningServer, ServerConfig};

fn scenario(name: &str) -> ScenarioSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name);
    ScenarioSpec::load(&path).unwrap()
}

async fn server() -> RunningServer {
    start(ServerConfig::ephemeral()).await.unwrap()
}

fn show(report: &ScenarioReport) {
    println!("{}", report.summary());
    for line in &report.trace {
        println!("  trace: {line}");
    }
}

async fn expect_pass(spec: &ScenarioSpec, srv: &RunningServer, seed: u64) -> ScenarioReport {
    let report = evaluate_scenario(spec, &srv.http_url(), &RunOptions::seeded(seed)).await.unwrap();
    show(&report);
    assert!(report.passed, "seed {seed}");
    report
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn canonical_scenario_passes() {
    let srv = server().await;
    let report = expect_pass(&scenario("canonical.toml"), &srv, 11).await;
    assert_eq!(report.clients.len(), 11);
    assert_eq!(report.grabs.double_holds, 0);
    assert!(report.assertion("bandwidth").unwrap().passed);
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn idle_admin_moves_no_pose_bytes() {
    let srv = server().await;
    let report = expect_pass(&scenario("idle_admin.toml"), &srv, 1).await;
    assert_eq!(report.traffic.pose_bytes_in + report.traffic.pose_bytes_out, 0);
    assert!(report.wall_ms >= 5000);
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn grab_storm_has_one_winner_named_by_every_denial() {
    let srv = server().await;
    let report = expect_pass(&scenario("grab_storm.toml"), &srv, 5).await;
    assert_eq!(report.grabs.grants, 1);
    assert_eq!(report.grabs.denials, 7);
    assert_eq!(report.grabs.denial_holders.len(), 1);
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn lossy_jittery_link_still_converges_over_twenty_seeds() {
    let srv = server().await;
    let spec = scenario("lossy.toml");
    let url = srv.http_url();
    let runs = (0..20u64).map(|seed| {
        let spec = spec.clone();
        let url = url.clone();
        async move { (seed, evaluate_scenario(&spec, &url, &RunOptions::seeded(seed)).await.unwrap()) }
    });
    let mut dropped = 0;
    for (seed, report) in futures::future::join_all(runs).await {
        if !report.passed {
            show(&report);
        }
        assert!(report.passed, "seed {seed}");
        dropped += report.clients.iter().map(|c| c.pose_frames_dropped).sum::<u64>();
    }
    assert!(dropped > 0, "the shaper never dropped a pose frame");
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn single_mover_without_loss_converges_exactly() {
    let spec = ScenarioSpec::from_toml(
        r#"
name = "single mover"
preset = "empty"
quiescence_ms = 300

[[clients]]
name = "mover"
role = "vr_active"
actions = [{ at_ms = 0, do = "move", until_ms = 800, hands = true }]

[[clients]]
name = "watcher"
role = "passive"
"#,
    )
    .unwrap();
    let srv = server().await;
    let report = expect_pass(&spec, &srv, 2).await;
    assert_eq!(report.convergence.max_error, 0.0);
    assert_eq!(report.convergence.subjects, 1);
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn lifecycle_with_late_joiner_and_departures_converges() {
    let spec = ScenarioSpec::from_toml(
        r#"
name = "lifecycle"
preset = "demo"
quiescence_ms = 800

[[clients]]
name = "admin"
role = "admin"
actions = [
  { at_ms = 100, do = "add_object", asset_url = "https://example.org/benzene.glb", label = "Benzene", position = [0.0, 1.0, -1.0] },
  { at_ms = 900, do = "set_grab", enabled = false },
  { at_ms = 1200, do = "set_grab", enabled = true },
  { at_ms = 1300, do = "remove_object", object = 2 },
]

[[clients]]
name = "holder"
role = "vr_active"
actions = [
  { at_ms = 0, do = "move", until_ms = 1500 },
  { at_ms = 300, do = "grab", object = 1 },
  { at_ms = 400, do = "move_object", object = 1, until_ms = 800 },
  { at_ms = 1400, do = "grab", object = 3 },
  { at_ms = 1600, do = "disconnect" },
]

[[clients]]
name = "leaver"
role = "vr_active"
actions = [
  { at_ms = 0, do = "move", until_ms = 500, hands = true },
  { at_ms = 600, do = "disconnect" },
]

[[clients]]
name = "late"
role = "passive"
actions = [{ at_ms = 1000, do = "join" }]
"#,
    )
    .unwrap();
    let srv = server().await;
    let report = expect_pass(&spec, &srv, 3).await;
    let late = report.clients.iter().find(|c| c.name == "late").unwrap();
    assert!(late.participant_id.is_some());
    assert!(late.pose_in_bytes > 0, "late joiner received no bootstrap or live poses");
    assert!(report.clients.iter().find(|c| c.name == "leaver").unwrap().disconnected);
    assert_eq!(report.grabs.grants, 2);
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn wrong_expectation_fails_with_a_trace() {
    let mut spec = scenario("grab_storm.toml");
    spec.expect.grants = Some(2);
    let srv = server().await;
    match run_scenario(&spec, &srv.http_url(), &RunOptions::seeded(9)).await {
        Err(HarnessError::AssertionFailed { report, trace }) => {
            assert!(!report.passed);
            assert!(!report.assertion("grants").unwrap().passed);
            assert!(report.assertion("denials").unwrap().passed);
            assert!(trace.iter().any(|l| l.starts_with("grants:")));
        }
        other => panic!("expected an assertion failure, got {other:?}"),
    }
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn overrunning_scenario_times_out() {
    let spec = ScenarioSpec::from_toml(
        r#"
name = "too slow"
timeout_ms = 300

[[clients]]
name = "mover"
role = "vr_active"
actions = [{ at_ms = 0, do = "move", until_ms = 5000 }]
"#,
    )
    .unwrap();
    let srv = server().await;
    let err = run_scenario(&spec, &srv.http_url(), &RunOptions::seeded(1)).await.unwrap_err();
    assert!(matches!(err, HarnessError::ScenarioTimeout(_)), "{err}");
    srv.shutdown().await;
}

#[tokio::test]
async fn unreachable_server_is_a_connect_error() {
    let err = run_scenario(&scenario("idle_admin.toml"), "http://127.0.0.1:1", &RunOptions::seeded(1)).await.unwrap_err();
    assert!(matches!(err, HarnessError::Connect(_)), "{err}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn event_log_file_replays_to_the_live_room() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.ndjson");
    let srv = start(ServerConfig { event_log: Some(path.clone()), ..ServerConfig::ephemeral() }).await.unwrap();
    let report = expect_pass(&scenario("grab_storm.toml"), &srv, 4).await;
    tokio::time::sleep(Duration::from_millis(300)).await;

    let rooms = read_event_log(&path).unwrap();
    let log = &rooms[&report.room_id];
    assert_eq!(log.first().unwrap().seq, 0);
    let live = srv.hub.room_state(&report.room_id).unwrap();
    assert_eq!(replay(log).unwrap(), live);
    assert_eq!(replay_file(&path).unwrap()[&report.room_id], live);
    srv.shutdown().await;
}

#[test]
fn bad_scenarios_are_rejected_before_running() {
    for text in [
        "name = \"x\"\n",
        "name = \"x\"\n[[clients]]\nname = \"a\"\nrole = \"admin\"\ncount = 2\n",
        "name = \"x\"\n[[clients]]\nname = \"a\"\nrole = \"pilot\"\n",
        "name = \"x\"\n[[clients]]\nname = \"a\"\nrole = \"vr_active\"\nactions = [{ at_ms = 5, do = \"grab\", object = 1, force = true }]\n",
        "name = \"x\"\n[steady]\nfrom_ms = 5\nto_ms = 5\n[[clients]]\nname = \"a\"\nrole = \"admin\"\n",
    ] {
        assert!(matches!(ScenarioSpec::from_toml(text), Err(HarnessError::BadScenario(_))), "{text}");
    }
}

#[test]
fn cli_runs_a_scenario_and_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.toml");
    let file = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/grab_storm.toml");
    let code = harness_main(["harness", "run", file.to_str().unwrap(), "--seed", "8", "--report", report.to_str().unwrap()]);
    assert_eq!(code, 0);
    let parsed = ScenarioReport::from_toml(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(parsed.passed);
    assert_eq!(parsed.seed, 8);

    assert_eq!(harness_main(["harness", "run", "/nonexistent/scenario.toml"]), 2);
    assert_eq!(harness_main(["harness", "fly"]), 2);
}
