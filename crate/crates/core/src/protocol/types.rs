//! Geometric value types carried by both protocol planes.

use serde::{Deserialize, Serialize};

use super::PoseError;

/// Quaternions whose norm deviates from 1 by more than this are rejected.
pub const QUAT_ACCEPT_TOLERANCE: f64 = 1e-3;
/// Quaternions are re-normalized until their norm is within this of 1.
pub const QUAT_STORE_TOLERANCE: f64 = 1e-6;

pub const MIN_SCALE: f32 = 1e-4;
pub const MAX_SCALE: f32 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f32,
    pub y: f32,
    pub z: f32,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f32, y: f32, z: f32) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Largest absolute per-component difference.
    pub fn max_abs_diff(&self, other: &Vec3) -> f64 {
        let dx = (self.x as f64 - other.x as f64).abs();
        let dy = (self.y as f64 - other.y as f64).abs();
        let dz = (self.z as f64 - other.z as f64).abs();
        dx.max(dy).max(dz)
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        let dz = self.z as f64 - other.z as f64;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub(crate) fn to_array(self) -> [f32; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f32; 3]> for Vec3 {
    fn from(v: [f32; 3]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }
}

/// Orientation as a unit quaternion, stored `(x, y, z, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuat {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub w: f32,
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { x: 0.0, y: 0.0, z: 0.0, w: 1.0 };

    /// Raw constructor; no normalization is applied.
    pub const fn from_xyzw(x: f32, y: f32, z: f32, w: f32) -> Self {
        Self { x, y, z, w }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let (ax, ay, az) = (axis.x as f64, axis.y as f64, axis.z as f64);
        let len = (ax * ax + ay * ay + az * az).sqrt();
        if len == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (angle / 2.0).sin_cos();
        let k = s / len;
        Self::normalize_f64(ax * k, ay * k, az * k, c)
    }

    fn normalize_f64(x: f64, y: f64, z: f64, w: f64) -> Self {
        let n = (x * x + y * y + z * z + w * w).sqrt();
        Self {
            x: (x / n) as f32,
            y: (y / n) as f32,
            z: (z / n) as f32,
            w: (w / n) as f32,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.w.is_finite()
    }

    pub fn norm(&self) -> f64 {
        let (x, y, z, w) = (self.x as f64, self.y as f64, self.z as f64, self.w as f64);
        (x * x + y * y + z * z + w * w).sqrt()
    }

    /// Applies the ingestion rule: reject if the norm is off by more than
    /// [`QUAT_ACCEPT_TOLERANCE`], re-normalize if off by more than
    /// [`QUAT_STORE_TOLERANCE`], pass through untouched otherwise.
    pub fn checked(self) -> Result<Self, PoseError> {
        if !self.is_finite() {
            return Err(PoseError::InvalidFloat);
        }
        let norm = self.norm();
        let deviation = (norm - 1.0).abs();
        if deviation > QUAT_ACCEPT_TOLERANCE {
            return Err(PoseError::DenormalQuat { norm });
        }
        if deviation > QUAT_STORE_TOLERANCE {
            return Ok(Self::normalize_f64(
                self.x as f64,
                self.y as f64,
                self.z as f64,
                self.w as f64,
            ));
        }
        Ok(self)
    }

    /// Sign-invariant distance `min(|q - p|, |q + p|)`.
    pub fn distance(&self, other: &UnitQuat) -> f64 {
        let a = [self.x, self.y, self.z, self.w];
        let b = [other.x, other.y, other.z, other.w];
        let mut minus = 0.0f64;
        let mut plus = 0.0f64;
        for i in 0..4 {
            let (p, q) = (a[i] as f64, b[i] as f64);
            minus += (p - q) * (p - q);
            plus += (p + q) * (p + q);
        }
        minus.sqrt().min(plus.sqrt())
    }

    pub(crate) fn to_array(self) -> [f32; 4] {
        [self.x, self.y, self.z, self.w]
    }
}

/// Placement of a scene object: position, orientation and uniform scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub position: Vec3,
    pub orientation: UnitQuat,
    pub scale: f32,
}

impl Default for Transform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        position: Vec3::ZERO,
        orientation: UnitQuat::IDENTITY,
        scale: 1.0,
    };

    /// Builds a transform, applying the quaternion ingestion rule and the
    /// scale range check.
    pub fn new(position: Vec3, orientation: UnitQuat, scale: f32) -> Result<Self, PoseError> {
        Transform { position, orientation, scale }.checked()
    }

    pub fn at(position: Vec3) -> Self {
        Transform { position, ..Self::IDENTITY }
    }

    pub fn checked(self) -> Result<Self, PoseError> {
        if !self.position.is_finite() || !self.scale.is_finite() {
            return Err(PoseError::InvalidFloat);
        }
        if !(MIN_SCALE..=MAX_SCALE).contains(&self.scale) {
            return Err(PoseError::ScaleOutOfRange { scale: self.scale });
        }
        Ok(Transform { orientation: self.orientation.checked()?, ..self })
    }

    /// Convergence distance: the worst of per-component position error,
    /// scale error and quaternion distance.
    pub fn distance(&self, other: &Transform) -> f64 {
        let pos = self.position.max_abs_diff(&other.position);
        let scale = (self.scale as f64 - other.scale as f64).abs();
        pos.max(scale).max(self.orientation.distance(&other.orientation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidPose {
    pub position: Vec3,
    pub orientation: UnitQuat,
}

impl RigidPose {
    pub fn new(position: Vec3, orientation: UnitQuat) -> Self {
        Self { position, orientation }
    }

    pub fn checked(self) -> Result<Self, PoseError> {
        if !self.position.is_finite() {
            return Err(PoseError::InvalidFloat);
        }
        Ok(RigidPose { orientation: self.orientation.checked()?, ..self })
    }

    pub fn distance(&self, other: &RigidPose) -> f64 {
        self.position
            .max_abs_diff(&other.position)
            .max(self.orientation.distance(&other.orientation))
    }
}

/// A participant's broadcast embodiment: a head and up to two hands.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AvatarPose {
    pub head: RigidPose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_hand: Option<RigidPose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_hand: Option<RigidPose>,
}

impl AvatarPose {
    pub fn head_only(head: RigidPose) -> Self {
        Self { head, left_hand: None, right_hand: None }
    }

    pub fn checked(self) -> Result<Self, PoseError> {
        Ok(AvatarPose {
            head: self.head.checked()?,
            left_hand: self.left_hand.map(RigidPose::checked).transpose()?,
            right_hand: self.right_hand.map(RigidPose::checked).transpose()?,
        })
    }

    /// Worst rigid-pose distance over matching parts. A hand present on one
    /// side only counts as infinitely far.
    pub fn distance(&self, other: &AvatarPose) -> f64 {
        fn hand(a: &Option<RigidPose>, b: &Option<RigidPose>) -> f64 {
            match (a, b) {
                (Some(a), Some(b)) => a.distance(b),
                (None, None) => 0.0,
                _ => f64::INFINITY,
            }
        }
        self.head
            .distance(&other.head)
            .max(hand(&self.left_hand, &other.left_hand))
            .max(hand(&self.right_hand, &other.right_hand))
    }
}

/// Participation role inside a room.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Passive,
    VrActive,
    Admin,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Admin, Role::VrActive, Role::Passive];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Admin => "admin",
            Role::VrActive => "vr_active",
            Role::Passive => "passive",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "admin" => Ok(Role::Admin),
            "vr_active" | "vr-active" | "vractive" => Ok(Role::VrActive),
            "passive" | "guest" => Ok(Role::Passive),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}
