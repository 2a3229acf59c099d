//! Rigid transforms shared by the kinematics, mocap and zone modules.

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Drift allowed on a composed quaternion before it is renormalized.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-12;

/// Translation in meters plus a unit quaternion rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self { translation, rotation }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(translation, UnitQuaternion::identity())
    }

    /// Fixed-axis XYZ roll-pitch-yaw, i.e. `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Self::new(
            Vector3::from(xyz),
            UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
        )
    }

    /// Builds a pose from a raw `(w, x, y, z)` quaternion, normalizing it.
    /// Returns `None` for a zero or non-finite quaternion.
    pub fn from_wxyz(translation: [f64; 3], wxyz: [f64; 4]) -> Option<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        Some(Self::new(
            Vector3::from(translation),
            UnitQuaternion::new_unchecked(q / norm),
        ))
    }

    /// `self ∘ other`: apply `other` in the frame described by `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            translation: self.translation + self.rotation * other.translation,
            rotation: renormalize(self.rotation * other.rotation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            translation: -(inv * self.translation),
            rotation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.translation + self.rotation * p
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite()) && self.wxyz().iter().all(|v| v.is_finite())
    }

    /// Little-endian canonical bytes, used for state hashing.
    pub fn write_canonical(&self, out: &mut Vec<u8>) {
        for v in self.translation.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.wxyz() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Renormalizes a quaternion whose norm has drifted beyond
/// [`RENORMALIZE_TOLERANCE`]; otherwise returns it untouched.
pub fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let norm = q.quaternion().norm();
    if (norm - 1.0).abs() > RENORMALIZE_TOLERANCE {
        UnitQuaternion::new_unchecked(q.into_inner() / norm)
    } else {
        q
    }
}

/// Rotation by `angle` radians about a unit `axis`.
pub fn axis_angle(axis: &Unit<Vector3<f64>>, angle: f64) -> UnitQuaternion<f64> {
    let half = 0.5 * angle;
    let (s, c) = half.sin_cos();
    UnitQuaternion::new_unchecked(Quaternion::new(c, axis.x * s, axis.y * s, axis.z * s))
}
