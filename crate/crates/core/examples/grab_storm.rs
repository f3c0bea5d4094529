//! Eight clients race for one object, over and over. Each run prints the
//! winner and the holder every denial named.
//!
//! ```text
//! cargo run --example grab_storm -- 20
//! ```

use std::path::PathBuf;

use molxr::harness::{evaluate_scenario, RunOptions, ScenarioSpec};
use molxr::server::{start, ServerConfig};
use molxr::session::RoomEvent;

#[tokio::main]
async fn main() {
    let runs: u64 = std::env::args().nth(1).and_then(|n| n.parse().ok()).unwrap_or(10);
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/grab_storm.toml");
    let spec = ScenarioSpec::load(&path).unwrap();
    let srv = start(ServerConfig::ephemeral()).await.unwrap();

    for seed in 0..runs {
        let report = evaluate_scenario(&spec, &srv.http_url(), &RunOptions::seeded(seed)).await.unwrap();
        let log = srv.hub.room_log(&report.room_id).unwrap();
        let winners: Vec<u16> = log
            .iter()
            .filter_map(|r| match r.event {
                RoomEvent::GrabGranted { holder_id, .. } => Some(holder_id),
                _ => None,
            })
            .collect();
        println!(
            "seed {seed:>3}: granted to {winners:?}, {} denials naming {:?}, {}",
            report.grabs.denials,
            report.grabs.denial_holders,
            if report.passed { "pass" } else { "FAIL" }
        );
    }
    srv.shutdown().await;
}
