use std::collections::BTreeMap;

use nalgebra::Vector3;

use super::{JointKind, ModelError, RobotModel};
use crate::pose::{axis_angle, Pose};

/// Link name to world pose.
pub type LinkPoses = BTreeMap<String, Pose>;

pub fn forward_kinematics(model: &RobotModel, positions: &[f64]) -> Result<LinkPoses, ModelError> {
    forward_kinematics_from(model, positions, &Pose::identity())
}

/// Forward kinematics with the root link placed at `base`.
///
/// `child = parent ∘ origin ∘ motion`, where motion rotates about the joint
/// axis (revolute) or translates along it (prismatic).
pub fn forward_kinematics_from(model: &RobotModel, positions: &[f64], base: &Pose) -> Result<LinkPoses, ModelError> {
    if positions.len() != model.movable_count() {
        return Err(ModelError::DimensionMismatch {
            expected: model.movable_count(),
            actual: positions.len(),
        });
    }
    let mut value_of = vec![0.0; model.joints.len()];
    for (slot, (joint_index, &q)) in model.movable.iter().zip(positions).enumerate() {
        if !q.is_finite() {
            return Err(ModelError::NonFinite(model.joints[model.movable[slot]].name.clone()));
        }
        value_of[*joint_index] = q;
    }

    let mut poses = LinkPoses::new();
    poses.insert(model.root_link().to_string(), *base);
    for &ji in model.traversal() {
        let joint = &model.joints[ji];
        let parent = poses[&joint.parent];
        let q = value_of[ji];
        let motion = match joint.kind {
            JointKind::Fixed => Pose::identity(),
            JointKind::Revolute => Pose::new(Vector3::zeros(), axis_angle(&joint.axis, q)),
            JointKind::Prismatic => Pose::from_translation(joint.axis.into_inner() * q),
        };
        let child = parent.compose(&joint.origin.to_pose()).compose(&motion);
        poses.insert(joint.child.clone(), child);
    }
    Ok(poses)
}

/// World-frame linear Jacobian of `link`'s origin by central differences
/// (step `h`). Column `j` is `∂p/∂q_j` for movable joint `j`.
pub fn position_jacobian(
    model: &RobotModel,
    positions: &[f64],
    base: &Pose,
    link: &str,
    h: f64,
) -> Result<Vec<Vector3<f64>>, ModelError> {
    if !model.has_link(link) {
        return Err(ModelError::UnknownLink(link.to_string()));
    }
    let mut q = positions.to_vec();
    let mut columns = Vec::with_capacity(q.len());
    for j in 0..q.len() {
        let q0 = q[j];
        q[j] = q0 + h;
        let plus = forward_kinematics_from(model, &q, base)?[link].translation;
        q[j] = q0 - h;
        let minus = forward_kinematics_from(model, &q, base)?[link].translation;
        q[j] = q0;
        columns.push((plus - minus) / (2.0 * h));
    }
    Ok(columns)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitViolation {
    pub joint: String,
    pub index: usize,
    pub value: f64,
    /// The bound that was crossed.
    pub bound: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppliedJoints {
    pub positions: Vec<f64>,
    pub violations: Vec<LimitViolation>,
}

/// Maps a received joint-position vector onto the model. No interpolation
/// happens between frames; each call is independent.
pub fn apply_joint_state(model: &RobotModel, positions: &[f64], clamp: bool) -> Result<AppliedJoints, ModelError> {
    if positions.len() != model.movable_count() {
        return Err(ModelError::DimensionMismatch {
            expected: model.movable_count(),
            actual: positions.len(),
        });
    }
    let mut out = Vec::with_capacity(positions.len());
    let mut violations = Vec::new();
    for (index, (joint, &q)) in model.movable_joints().zip(positions).enumerate() {
        if !q.is_finite() {
            return Err(ModelError::NonFinite(joint.name.clone()));
        }
        let bound = if q > joint.limits.upper {
            Some(joint.limits.upper)
        } else if q < joint.limits.lower {
            Some(joint.limits.lower)
        } else {
            None
        };
        match bound {
            Some(bound) => {
                violations.push(LimitViolation {
                    joint: joint.name.clone(),
                    index,
                    value: q,
                    bound,
                    clamped: clamp,
                });
                out.push(if clamp { bound } else { q });
            }
            None => out.push(q),
        }
    }
    Ok(AppliedJoints {
        positions: out,
        violations,
    })
}

/// Splits a reported gripper opening across the two symmetric finger joints.
pub fn gripper_width_to_fingers(width: f64) -> Result<(f64, f64), ModelError> {
    if width.is_nan() || width < 0.0 {
        return Err(ModelError::NegativeWidth(width));
    }
    Ok((width / 2.0, width / 2.0))
}
