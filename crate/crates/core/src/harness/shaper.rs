use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::time::{Duration, Instant};

/// Link conditions for one synthetic client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkProfile {
    pub latency_ms: f64,
    /// Each frame gets a uniform extra delay in `[-jitter, +jitter]`.
    pub jitter_ms: f64,
    /// Probability that an inbound pose frame is lost.
    pub pose_drop: f64,
}

impl Default for NetworkProfile {
    fn default() -> Self {
        Self { latency_ms: 0.0, jitter_ms: 0.0, pose_drop: 0.0 }
    }
}

impl NetworkProfile {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.latency_ms.is_finite() && self.latency_ms >= 0.0) {
            return Err("latency_ms must be non-negative".into());
        }
        if !(self.jitter_ms.is_finite() && self.jitter_ms >= 0.0 && self.jitter_ms <= self.latency_ms.max(self.jitter_ms)) {
            return Err("jitter_ms must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.pose_drop) {
            return Err("pose_drop must be within [0, 1]".into());
        }
        Ok(())
    }
}

/// Ordered delay line. Frames leave in the order they entered, each no
/// earlier than its own sampled delay, like a reliable stream over a
/// jittery path.
#[derive(Debug)]
pub struct NetworkShaper {
    profile: NetworkProfile,
    rng: ChaCha8Rng,
    last_release: Option<Instant>,
}

impl NetworkShaper {
    pub fn new(profile: NetworkProfile, seed: u64) -> Self {
        Self { profile, rng: ChaCha8Rng::seed_from_u64(seed), last_release: None }
    }

    pub fn profile(&self) -> NetworkProfile {
        self.profile
    }

    fn sample_delay(&mut self) -> Duration {
        let jitter = if self.profile.jitter_ms > 0.0 {
            self.rng.random_range(-self.profile.jitter_ms..=self.profile.jitter_ms)
        } else {
            0.0
        };
        Duration::from_secs_f64((self.profile.latency_ms + jitter).max(0.0) / 1000.0)
    }

    /// Release time for a frame entering now.
    pub fn schedule(&mut self, now: Instant) -> Instant {
        let at = (now + self.sample_delay()).max(self.last_release.unwrap_or(now));
        self.last_release = Some(at);
        at
    }

    /// Whether an inbound pose frame is lost. Control frames never are.
    pub fn drop_pose(&mut self) -> bool {
        self.profile.pose_drop > 0.0 && self.rng.random_bool(self.profile.pose_drop)
    }
}
