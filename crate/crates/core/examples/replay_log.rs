//! Runs the canonical scenario against a server that appends its event log
//! to disk, then rebuilds every room from the file alone.

use std::path::PathBuf;

use molxr::harness::{evaluate_scenario, replay_file, RunOptions, ScenarioSpec};
use molxr::server::{start, ServerConfig};

#[tokio::main]
async fn main() {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("events.ndjson");
    let srv = start(ServerConfig { event_log: Some(log_path.clone()), ..ServerConfig::ephemeral() }).await.unwrap();
    let spec = ScenarioSpec::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/canonical.toml")).unwrap();
    let report = evaluate_scenario(&spec, &srv.http_url(), &RunOptions::seeded(1)).await.unwrap();
    println!("{}", report.summary().lines().next().unwrap());
    tokio::time::sleep(std::time::Duration::from_millis(300)).await;

    let live = srv.hub.room_state(&report.room_id).unwrap();
    let rebuilt = replay_file(&log_path).unwrap();
    let lines = std::fs::read_to_string(&log_path).unwrap().lines().count();
    println!("{lines} log lines, {} room(s) rebuilt", rebuilt.len());
    println!("replayed state equals the live room: {}", rebuilt[&report.room_id] == live);
    srv.shutdown().await;
}
