//! Kinematic robot description and joint-state mirroring.
//!
//! A [`RobotModel`] is built from a URDF subset (links, joints, visual mesh
//! paths) and turned into link poses with [`forward_kinematics`]. Joint
//! states arriving from the physical robot are checked against the parsed
//! limits with [`apply_joint_state`].

mod kinematics;
mod urdf;

pub use kinematics::{
    apply_joint_state, forward_kinematics, forward_kinematics_from, gripper_width_to_fingers, position_jacobian,
    AppliedJoints, LimitViolation, LinkPoses,
};
pub use urdf::{parse_urdf, parse_urdf_file};

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::Pose;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("root element must be <robot>, found <{0}>")]
    NotARobot(String),
    #[error("missing attribute `{attr}` on <{element}>")]
    MissingAttribute { element: String, attr: String },
    #[error("invalid number list `{value}` for {context}")]
    BadNumber { context: String, value: String },
    #[error("duplicate link name `{0}`")]
    DuplicateLink(String),
    #[error("duplicate joint name `{0}`")]
    DuplicateJoint(String),
    #[error("joint `{joint}` references unknown link `{link}`")]
    UnresolvedLink { joint: String, link: String },
    #[error("unsupported joint type `{kind}` on joint `{joint}`")]
    UnsupportedJoint { joint: String, kind: String },
    #[error("joint `{0}` has a zero-length axis")]
    ZeroAxis(String),
    #[error("joint `{joint}` has lower limit {lower} above upper limit {upper}")]
    InvertedLimits { joint: String, lower: f64, upper: f64 },
    #[error("link `{0}` is the child of more than one joint")]
    MultipleParents(String),
    #[error("kinematic graph has {0} root links, expected exactly one")]
    RootCount(usize),
    #[error("kinematic graph contains a cycle")]
    Cycle,
    #[error("expected {expected} joint values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite value for joint `{0}`")]
    NonFinite(String),
    #[error("gripper width must be non-negative, got {0}")]
    NegativeWidth(f64),
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("failed to read robot description: {0}")]
    Io(#[from] std::io::Error),
}

/// One sensor sample of every movable joint plus the gripper.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointState {
    pub time_ns: u64,
    /// rad, or m for prismatic joints.
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    /// N·m (N for prismatic joints).
    pub efforts: Vec<f64>,
    pub gripper_width: f64,
    pub gripper_velocity: f64,
}

impl JointState {
    pub fn dof(&self) -> usize {
        self.positions.len()
    }

    pub fn validate(&self, expected_dof: usize) -> Result<(), ModelError> {
        for len in [self.velocities.len(), self.efforts.len(), self.positions.len()] {
            if len != expected_dof {
                return Err(ModelError::DimensionMismatch {
                    expected: expected_dof,
                    actual: len,
                });
            }
        }
        if self.gripper_width.is_nan() || self.gripper_width < 0.0 {
            return Err(ModelError::NegativeWidth(self.gripper_width));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

impl JointKind {
    pub fn is_movable(self) -> bool {
        !matches!(self, JointKind::Fixed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub lower: f64,
    pub upper: f64,
}

impl JointLimits {
    pub const UNBOUNDED: JointLimits = JointLimits {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub name: String,
    /// Mesh reference exactly as written in the description; never resolved.
    pub visual: Option<String>,
}

/// Joint origin as written in the description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
}

impl Default for Origin {
    fn default() -> Self {
        Self {
            xyz: [0.0; 3],
            rpy: [0.0; 3],
        }
    }
}

impl Origin {
    pub fn to_pose(&self) -> Pose {
        Pose::from_xyz_rpy(self.xyz, self.rpy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    pub origin: Origin,
    pub axis: Unit<Vector3<f64>>,
    pub limits: JointLimits,
}

/// A validated kinematic tree.
///
/// Joints keep document order; movable joints (revolute and prismatic) are
/// indexed in that order by every joint-space vector in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    root: usize,
    /// Joint indices in parent-before-child order.
    traversal: Vec<usize>,
    /// For each movable joint (in document order), its index into `joints`.
    movable: Vec<usize>,
}

impl RobotModel {
    /// Validates the tree structure and builds the traversal order.
    pub fn new(name: String, links: Vec<Link>, joints: Vec<Joint>) -> Result<Self, ModelError> {
        use std::collections::{HashMap, HashSet};

        let mut link_index = HashMap::with_capacity(links.len());
        for (i, link) in links.iter().enumerate() {
            if link_index.insert(link.name.as_str(), i).is_some() {
                return Err(ModelError::DuplicateLink(link.name.clone()));
            }
        }
        let mut seen_joints = HashSet::with_capacity(joints.len());
        let mut parent_of = vec![None; links.len()];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
        for (ji, joint) in joints.iter().enumerate() {
            if !seen_joints.insert(joint.name.as_str()) {
                return Err(ModelError::DuplicateJoint(joint.name.clone()));
            }
            let resolve = |name: &str| {
                link_index.get(name).copied().ok_or_else(|| ModelError::UnresolvedLink {
                    joint: joint.name.clone(),
                    link: name.to_string(),
                })
            };
            let p = resolve(&joint.parent)?;
            let c = resolve(&joint.child)?;
            if parent_of[c].replace(ji).is_some() {
                return Err(ModelError::MultipleParents(joint.child.clone()));
            }
            children[p].push(ji);
            if joint.limits.lower > joint.limits.upper {
                return Err(ModelError::InvertedLimits {
                    joint: joint.name.clone(),
                    lower: joint.limits.lower,
                    upper: joint.limits.upper,
                });
            }
        }

        let roots: Vec<usize> = (0..links.len()).filter(|&i| parent_of[i].is_none()).collect();
        if roots.len() != 1 {
            // A cycle with one clean tree elsewhere still leaves a single root,
            // so an empty root set is the only shape that is purely cyclic.
            if roots.is_empty() && !links.is_empty() {
                return Err(ModelError::Cycle);
            }
            return Err(ModelError::RootCount(roots.len()));
        }
        let root = roots[0];

        let mut traversal = Vec::with_capacity(joints.len());
        let mut stack = vec![root];
        while let Some(link) = stack.pop() {
            for &ji in children[link].iter().rev() {
                traversal.push(ji);
                stack.push(link_index[joints[ji].child.as_str()]);
            }
        }
        if traversal.len() != joints.len() {
            return Err(ModelError::Cycle);
        }

        let movable = joints
            .iter()
            .enumerate()
            .filter(|(_, j)| j.kind.is_movable())
            .map(|(i, _)| i)
            .collect();

        Ok(Self {
            name,
            links,
            joints,
            root,
            traversal,
            movable,
        })
    }

    pub fn root_link(&self) -> &str {
        &self.links[self.root].name
    }

    pub fn movable_count(&self) -> usize {
        self.movable.len()
    }

    /// Movable joints in joint-vector order.
    pub fn movable_joints(&self) -> impl Iterator<Item = &Joint> + '_ {
        self.movable.iter().map(move |&i| &self.joints[i])
    }

    pub fn joint(&self, name: &str) -> Option<&Joint> {
        self.joints.iter().find(|j| j.name == name)
    }

    /// Position of a movable joint in joint-vector order.
    pub fn movable_index(&self, name: &str) -> Option<usize> {
        self.movable.iter().position(|&i| self.joints[i].name == name)
    }

    pub fn has_link(&self, name: &str) -> bool {
        self.links.iter().any(|l| l.name == name)
    }

    pub(crate) fn traversal(&self) -> &[usize] {
        &self.traversal
    }
}
