//! Prohibited zones as oriented boxes, with an outward push for any point
//! found inside.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::Pose;
use crate::transport::{Command, CommandFrame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZoneError {
    #[error("zone {id}: {reason}")]
    Invalid { id: u32, reason: String },
    #[error("zone {zone} is attached to unknown asset {asset}")]
    UnknownAsset { zone: u32, asset: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProhibitedZone {
    pub id: u32,
    /// In the world, or in the asset frame when attached.
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    /// w, x, y, z
    #[serde(default = "identity_wxyz")]
    pub orientation: [f64; 4],
    /// N/m
    pub stiffness: f64,
    #[serde(default)]
    pub attached_asset: Option<u8>,
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl ProhibitedZone {
    pub fn validate(&self) -> Result<(), ZoneError> {
        let fail = |reason: &str| {
            Err(ZoneError::Invalid {
                id: self.id,
                reason: reason.to_string(),
            })
        };
        if !self.center.iter().chain(&self.orientation).all(|x| x.is_finite()) {
            return fail("non-finite geometry");
        }
        if !self.half_extents.iter().all(|h| *h > 0.0 && h.is_finite()) {
            return fail("half extents must be positive");
        }
        if !(self.stiffness >= 0.0 && self.stiffness.is_finite()) {
            return fail("stiffness must be non-negative");
        }
        let [w, x, y, z] = self.orientation;
        if (Quaternion::new(w, x, y, z).norm() - 1.0).abs() > 1e-6 {
            return fail("orientation is not a unit quaternion");
        }
        Ok(())
    }

    /// The box as declared, before any asset motion.
    pub fn declared_box(&self) -> ZoneBox {
        let [w, x, y, z] = self.orientation;
        ZoneBox {
            pose: Pose::new(
                Vector3::from(self.center),
                UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)),
            ),
            half_extents: Vector3::from(self.half_extents),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneBox {
    /// Box frame in the world.
    pub pose: Pose,
    pub half_extents: Vector3<f64>,
}

impl ZoneBox {
    pub fn transformed(&self, by: &Pose) -> ZoneBox {
        ZoneBox {
            pose: by.compose(&self.pose),
            half_extents: self.half_extents,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Repulsion {
    /// Outward unit vector.
    pub direction: Vector3<f64>,
    /// m, ≥ 0
    pub depth: f64,
}

/// Nearest-face push for a point inside (or on) the box; `None` outside.
///
/// Equidistant faces resolve to the lowest axis, and a coordinate of zero
/// counts as positive.
pub fn query(zone: &ZoneBox, point: &Vector3<f64>) -> Option<Repulsion> {
    if !point.iter().all(|x| x.is_finite()) {
        return None;
    }
    let local = zone.pose.inverse().transform_point(point);
    let h = &zone.half_extents;
    if (0..3).any(|i| local[i].abs() > h[i]) {
        return None;
    }
    let mut axis = 0;
    let mut depth = h[0] - local[0].abs();
    for i in 1..3 {
        let d = h[i] - local[i].abs();
        if d < depth {
            axis = i;
            depth = d;
        }
    }
    let mut n = Vector3::zeros();
    n[axis] = if local[axis] >= 0.0 { 1.0 } else { -1.0 };
    Some(Repulsion {
        direction: zone.pose.rotation * n,
        depth,
    })
}

/// Linear spring: `k · depth · direction`.
pub fn counterforce(r: &Repulsion, stiffness: f64) -> Vector3<f64> {
    r.direction * (stiffness * r.depth)
}

pub fn emit_command(robot_id: u8, time_ns: u64, r: &Repulsion, stiffness: f64) -> CommandFrame {
    CommandFrame {
        robot_id,
        time_ns,
        command: Command::ZoneRepulsion {
            direction: r.direction.into(),
            depth: r.depth,
            stiffness,
        },
    }
}

/// World box for `zone` this tick. Detached zones ignore `asset_pose`;
/// attached ones need it.
pub fn update_dynamic(zone: &ProhibitedZone, asset_pose: Option<&Pose>) -> Result<ZoneBox, ZoneError> {
    let declared = zone.declared_box();
    match (zone.attached_asset, asset_pose) {
        (None, _) => Ok(declared),
        (Some(_), Some(p)) => Ok(declared.transformed(p)),
        (Some(asset), None) => Err(ZoneError::UnknownAsset { zone: zone.id, asset }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneHit {
    pub zone_id: u32,
    pub repulsion: Repulsion,
    pub stiffness: f64,
}

/// Deepest penetration over all zones; ties go to the earlier zone.
pub fn deepest(zones: &[(ZoneBox, &ProhibitedZone)], point: &Vector3<f64>) -> Option<ZoneHit> {
    let mut best: Option<ZoneHit> = None;
    for (b, z) in zones {
        if let Some(r) = query(b, point) {
            if best.is_none_or(|h| r.depth > h.repulsion.depth) {
                best = Some(ZoneHit {
                    zone_id: z.id,
                    repulsion: r,
                    stiffness: z.stiffness,
                });
            }
        }
    }
    best
}
