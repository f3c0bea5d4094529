use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::audit::{ConvergenceReport, GrabReport};
use super::HarnessError;
use crate::protocol::Role;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub name: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant_id: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection_id: Option<u64>,
    pub disconnected: bool,
    pub convergence_error: f64,
    pub control_in_bytes: u64,
    pub control_out_bytes: u64,
    pub pose_in_bytes: u64,
    pub pose_out_bytes: u64,
    pub pose_frames_in: u64,
    pub pose_frames_dropped: u64,
    pub control_messages: u64,
    /// Server pose egress to this client during the steady window, per
    /// second.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_pose_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_pose_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub events: usize,
    pub matches: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub window_ms: u64,
    pub asset_bytes_after_join: u64,
    /// Server-wide deltas over the run, so concurrent runs on one server
    /// are counted together.
    pub pose_bytes_in: u64,
    pub pose_bytes_out: u64,
}

/// Outcome of one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub server: String,
    pub room_id: String,
    pub passed: bool,
    pub wall_ms: u64,
    pub assertions: Vec<Assertion>,
    pub convergence: ConvergenceReport,
    pub replay: ReplayReport,
    pub invariant_violations: Vec<String>,
    pub order_violations: Vec<String>,
    pub grabs: GrabReport,
    pub traffic: TrafficReport,
    pub clients: Vec<ClientReport>,
    /// Failing assertions and the log records that led to them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<String>,
}

impl ScenarioReport {
    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Io(format!("report encoding: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Io(format!("report decoding: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_toml()?).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{verdict} {} (seed {}, room {}, {} ms)", self.scenario, self.seed, self.room_id, self.wall_ms);
        for a in &self.assertions {
            let mark = if a.passed { "ok  " } else { "FAIL" };
            let _ = writeln!(out, "  {mark} {:<18} {}", a.name, a.detail);
        }
        let _ = writeln!(
            out,
            "  convergence: max error {:.3e} over {} subjects, {} clients",
            self.convergence.max_error,
            self.convergence.subjects,
            self.clients.len()
        );
        let _ = writeln!(
            out,
            "  grabs: {} granted, {} denied, {} double holds",
            self.grabs.grants, self.grabs.denials, self.grabs.double_holds
        );
        let _ = writeln!(
            out,
            "  traffic: pose {} B in / {} B out at the server, {} asset bytes after join",
            self.traffic.pose_bytes_in, self.traffic.pose_bytes_out, self.traffic.asset_bytes_after_join
        );
        for c in &self.clients {
            let rate = match (c.steady_pose_rate, c.steady_pose_bound) {
                (Some(r), Some(b)) => format!(", steady {r:.0} B/s of {b:.0}"),
                _ => String::new(),
            };
            let _ = writeln!(
                out,
                "    {:<14} {:<9} ctl {:>7}/{:<6} pose {:>8}/{:<7} err {:.1e}{rate}",
                c.name,
                c.role.as_str(),
                c.control_in_bytes,
                c.control_out_bytes,
                c.pose_in_bytes,
                c.pose_out_bytes,
                c.convergence_error
            );
        }
        out
    }
}
