use std::path::Path;

use serde::{Deserialize, Serialize};

use super::shaper::NetworkProfile;
use super::HarnessError;
use crate::protocol::{Role, Vec3};

/// A scripted multi-client session, loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub preset: Option<String>,
    /// Server broadcast rate the bandwidth bound is computed with.
    #[serde(default = "default_tick_hz")]
    pub tick_hz: u32,
    /// Silence after the last script action before state is compared.
    #[serde(default = "default_quiescence_ms")]
    pub quiescence_ms: u64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub network: NetworkProfile,
    #[serde(default)]
    pub steady: Option<SteadyWindow>,
    #[serde(default)]
    pub expect: Expectations,
    #[serde(rename = "clients")]
    pub groups: Vec<ClientGroup>,
}

fn default_tick_hz() -> u32 {
    20
}

fn default_quiescence_ms() -> u64 {
    1000
}

fn default_timeout_ms() -> u64 {
    60_000
}

/// Interval, relative to script start, in which traffic is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyWindow {
    pub from_ms: u64,
    pub to_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expectations {
    pub convergence_epsilon: f64,
    pub replay_matches: bool,
    pub invariants: bool,
    pub order: bool,
    /// Pose ingress per client within the steady window stays under
    /// `tick_hz * moving subjects * 96 B * 1.1`.
    pub bandwidth: bool,
    pub zero_asset_bytes: bool,
    pub zero_pose_bytes: bool,
    /// Exact number of grants in the server log.
    pub grants: Option<u64>,
    /// Exact number of denials received across all clients.
    pub denials: Option<u64>,
    pub max_wall_ms: Option<u64>,
}

impl Default for Expectations {
    fn default() -> Self {
        Self {
            convergence_epsilon: 1e-6,
            replay_matches: true,
            invariants: true,
            order: true,
            bandwidth: false,
            zero_asset_bytes: false,
            zero_pose_bytes: false,
            grants: None,
            denials: None,
            max_wall_ms: None,
        }
    }
}

/// `count` identical clients sharing one script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientGroup {
    pub name: String,
    pub role: Role,
    #[serde(default = "one")]
    pub count: usize,
    /// Overrides the scenario-wide link profile.
    #[serde(default)]
    pub network: Option<NetworkProfile>,
    #[serde(default)]
    pub actions: Vec<TimedAction>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedAction {
    pub at_ms: u64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "do", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    /// Joins at this time instead of before the script starts.
    Join,
    /// Streams the avatar along a horizontal circle until `until_ms`.
    Move {
        until_ms: u64,
        #[serde(default = "default_send_hz")]
        hz: u32,
        #[serde(default)]
        path: CirclePath,
        #[serde(default)]
        hands: bool,
    },
    Grab { object: u16 },
    /// Streams the object along a circle while this client holds it.
    MoveObject {
        object: u16,
        until_ms: u64,
        #[serde(default = "default_send_hz")]
        hz: u32,
        #[serde(default)]
        path: CirclePath,
    },
    /// Releases the object if this client holds it.
    Release { object: u16 },
    SetGrab { enabled: bool },
    AddObject {
        asset_url: String,
        label: String,
        #[serde(default)]
        position: [f32; 3],
    },
    RemoveObject { object: u16 },
    Disconnect,
}

fn default_send_hz() -> u32 {
    30
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CirclePath {
    pub center: [f32; 3],
    pub radius: f32,
    /// Revolutions per second.
    pub speed: f32,
}

impl Default for CirclePath {
    fn default() -> Self {
        Self { center: [0.0, 1.6, 0.0], radius: 1.0, speed: 0.25 }
    }
}

impl CirclePath {
    /// Position and yaw at `t_s` seconds, shifted by `phase` turns.
    pub fn sample(&self, t_s: f64, phase: f64) -> (Vec3, f64) {
        let angle = std::f64::consts::TAU * (self.speed as f64 * t_s + phase);
        let [cx, cy, cz] = self.center;
        let r = self.radius as f64;
        let position = Vec3::new(
            (cx as f64 + r * angle.cos()) as f32,
            cy,
            (cz as f64 + r * angle.sin()) as f32,
        );
        (position, -angle)
    }
}

impl Action {
    fn end_ms(&self, at_ms: u64) -> u64 {
        match self {
            Action::Move { until_ms, .. } | Action::MoveObject { until_ms, .. } => (*until_ms).max(at_ms),
            _ => at_ms,
        }
    }
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| HarnessError::BadScenario(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::BadScenario(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::BadScenario(m));
        if self.groups.is_empty() {
            return bad("scenario has no clients".into());
        }
        if self.tick_hz == 0 {
            return bad("tick_hz must be positive".into());
        }
        if let Err(e) = self.network.validate() {
            return bad(e);
        }
        if let Some(w) = self.steady {
            if w.from_ms >= w.to_ms {
                return bad("steady window is empty".into());
            }
        }
        if self.expect.convergence_epsilon.is_nan() || self.expect.convergence_epsilon < 0.0 {
            return bad("convergence_epsilon must be non-negative".into());
        }
        let admins: usize = self.groups.iter().filter(|g| g.role == Role::Admin).map(|g| g.count).sum();
        if admins > 1 {
            return bad("at most one admin client".into());
        }
        for group in &self.groups {
            if group.count == 0 {
                return bad(format!("group `{}` has count 0", group.name));
            }
            if let Some(Err(e)) = group.network.map(|n| n.validate()) {
                return bad(format!("group `{}`: {e}", group.name));
            }
            for (k, step) in group.actions.iter().enumerate() {
                if k > 0 && step.action == Action::Join {
                    return bad(format!("group `{}`: join must be the first action", group.name));
                }
                match &step.action {
                    Action::Move { hz, .. } | Action::MoveObject { hz, .. } if *hz == 0 || *hz > 1000 => {
                        return bad(format!("group `{}`: send rate must be 1..=1000 Hz", group.name));
                    }
                    _ => {}
                }
            }
            if group.actions.windows(2).any(|w| w[1].at_ms < w[0].at_ms) {
                return bad(format!("group `{}`: actions must be in time order", group.name));
            }
        }
        Ok(())
    }

    pub fn client_count(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }

    /// Time at which the last script action finishes.
    pub fn script_end_ms(&self) -> u64 {
        self.groups
            .iter()
            .flat_map(|g| g.actions.iter())
            .map(|a| a.action.end_ms(a.at_ms))
            .max()
            .unwrap_or(0)
    }
}

impl ClientGroup {
    pub fn joins_late(&self) -> bool {
        matches!(self.actions.first(), Some(TimedAction { action: Action::Join, .. }))
    }

    /// Whether this group streams its avatar during the window, and which
    /// objects it streams.
    pub(crate) fn moving_in(&self, from_ms: u64, to_ms: u64) -> (bool, Vec<u16>) {
        let mut avatar = false;
        let mut objects = Vec::new();
        for step in &self.actions {
            match &step.action {
                Action::Move { until_ms, .. } if step.at_ms < to_ms && *until_ms > from_ms => avatar = true,
                Action::MoveObject { object, until_ms, .. } if step.at_ms < to_ms && *until_ms > from_ms => {
                    objects.push(*object)
                }
                _ => {}
            }
        }
        (avatar, objects)
    }
}
