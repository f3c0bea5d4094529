//! Headless multi-client test rig. Synthetic clients drive a live server
//! over real websockets through a latency and loss shaper; the runner then
//! audits convergence, lock exclusivity, delivery order, replay and
//! bandwidth.

mod audit;
mod cli;
mod client;
mod replay;
mod report;
mod runner;
mod scenario;
mod shaper;

use thiserror::Error;

pub use audit::{
    assert_convergence, check_invariants, grab_epochs, order_violations, ConvergenceReport, GrabReport, Violation,
};
pub use cli::harness_main;
pub use client::{ClientCounters, ClientView, JoinStatus, LogEntry, PlaneTotals, SyntheticClient};
pub use replay::{read_event_log, replay, replay_file};
pub use report::{Assertion, ClientReport, ReplayReport, ScenarioReport, TrafficReport};
pub use runner::{endpoints, evaluate_scenario, run_scenario, RunOptions, BANDWIDTH_OVERHEAD};
pub use scenario::{Action, CirclePath, ClientGroup, Expectations, ScenarioSpec, SteadyWindow, TimedAction};
pub use shaper::{NetworkProfile, NetworkShaper};

use crate::session::ReplayError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad scenario: {0}")]
    BadScenario(String),
    #[error("cannot connect: {0}")]
    Connect(String),
    #[error("room creation failed: {0}")]
    CreateRoom(String),
    #[error("{client} was rejected: {reason}")]
    JoinRejected { client: String, reason: String },
    #[error("{0} is disconnected")]
    Disconnected(String),
    #[error("scenario timed out: {0}")]
    ScenarioTimeout(String),
    #[error("http: {0}")]
    Http(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    CorruptLog(#[from] ReplayError),
    #[error("assertions failed:\n{}", trace.join("\n"))]
    AssertionFailed { report: Box<ScenarioReport>, trace: Vec<String> },
}
