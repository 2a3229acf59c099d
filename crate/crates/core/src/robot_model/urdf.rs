//! URDF subset reader: `<link>` with visual mesh path, `<joint>` with
//! origin, axis, limit, parent and child. Everything else is skipped.

use std::path::Path;

use nalgebra::{Unit, Vector3};
use roxmltree::{Document, Node};

use super::{Joint, JointKind, JointLimits, Link, ModelError, Origin, RobotModel};

pub fn parse_urdf_file(path: impl AsRef<Path>) -> Result<RobotModel, ModelError> {
    let text = std::fs::read_to_string(path)?;
    parse_urdf(&text)
}

pub fn parse_urdf(xml_text: &str) -> Result<RobotModel, ModelError> {
    let doc = Document::parse(xml_text).map_err(|e| ModelError::Xml(e.to_string()))?;
    let robot = doc.root_element();
    if robot.tag_name().name() != "robot" {
        return Err(ModelError::NotARobot(robot.tag_name().name().to_string()));
    }
    let name = robot.attribute("name").unwrap_or_default().to_string();

    let mut links = Vec::new();
    let mut joints = Vec::new();
    for node in robot.children().filter(Node::is_element) {
        match node.tag_name().name() {
            "link" => links.push(parse_link(node)?),
            "joint" => joints.push(parse_joint(node)?),
            // collision shapes live inside links; transmissions, gazebo and
            // other extensions are not kinematics
            _ => {}
        }
    }
    RobotModel::new(name, links, joints)
}

fn required<'a>(node: Node<'a, '_>, attr: &str) -> Result<&'a str, ModelError> {
    node.attribute(attr).ok_or_else(|| ModelError::MissingAttribute {
        element: node.tag_name().name().to_string(),
        attr: attr.to_string(),
    })
}

fn child<'a, 'i>(node: Node<'a, 'i>, tag: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.is_element() && c.tag_name().name() == tag)
}

fn parse_link(node: Node) -> Result<Link, ModelError> {
    let name = required(node, "name")?.to_string();
    let visual = child(node, "visual")
        .and_then(|v| child(v, "geometry"))
        .and_then(|g| child(g, "mesh"))
        .and_then(|m| m.attribute("filename"))
        .map(str::to_string);
    Ok(Link { name, visual })
}

fn parse_triple(value: &str, context: &str) -> Result<[f64; 3], ModelError> {
    let bad = || ModelError::BadNumber {
        context: context.to_string(),
        value: value.to_string(),
    };
    let parts: Vec<f64> = value
        .split_whitespace()
        .map(|s| s.parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, z] if parts.iter().all(|v| v.is_finite()) => Ok([*x, *y, *z]),
        _ => Err(bad()),
    }
}

fn parse_scalar(node: Node, attr: &str, default: f64) -> Result<f64, ModelError> {
    match node.attribute(attr) {
        None => Ok(default),
        Some(v) => v.trim().parse().map_err(|_| ModelError::BadNumber {
            context: format!("{}@{}", node.tag_name().name(), attr),
            value: v.to_string(),
        }),
    }
}

fn parse_joint(node: Node) -> Result<Joint, ModelError> {
    let name = required(node, "name")?.to_string();
    let kind_attr = required(node, "type")?;
    let (kind, continuous) = match kind_attr {
        "revolute" => (JointKind::Revolute, false),
        "continuous" => (JointKind::Revolute, true),
        "prismatic" => (JointKind::Prismatic, false),
        "fixed" => (JointKind::Fixed, false),
        other => {
            return Err(ModelError::UnsupportedJoint {
                joint: name,
                kind: other.to_string(),
            })
        }
    };

    let parent = child(node, "parent")
        .ok_or_else(|| ModelError::MissingAttribute {
            element: format!("joint {name}"),
            attr: "parent".into(),
        })
        .and_then(|p| required(p, "link"))?
        .to_string();
    let child_link = child(node, "child")
        .ok_or_else(|| ModelError::MissingAttribute {
            element: format!("joint {name}"),
            attr: "child".into(),
        })
        .and_then(|c| required(c, "link"))?
        .to_string();

    let origin = match child(node, "origin") {
        None => Origin::default(),
        Some(o) => Origin {
            xyz: o
                .attribute("xyz")
                .map(|v| parse_triple(v, &format!("{name} origin xyz")))
                .transpose()?
                .unwrap_or([0.0; 3]),
            rpy: o
                .attribute("rpy")
                .map(|v| parse_triple(v, &format!("{name} origin rpy")))
                .transpose()?
                .unwrap_or([0.0; 3]),
        },
    };

    let raw_axis = child(node, "axis")
        .and_then(|a| a.attribute("xyz"))
        .map(|v| parse_triple(v, &format!("{name} axis")))
        .transpose()?
        .unwrap_or([1.0, 0.0, 0.0]);
    let axis = match Unit::try_new(Vector3::from(raw_axis), 1e-12) {
        Some(axis) => axis,
        None if kind.is_movable() => return Err(ModelError::ZeroAxis(name)),
        None => Vector3::x_axis(),
    };

    let limits = if !kind.is_movable() || continuous {
        JointLimits::UNBOUNDED
    } else {
        match child(node, "limit") {
            Some(l) => JointLimits {
                lower: parse_scalar(l, "lower", 0.0)?,
                upper: parse_scalar(l, "upper", 0.0)?,
            },
            None => JointLimits::UNBOUNDED,
        }
    };

    Ok(Joint {
        name,
        kind,
        parent,
        child: child_link,
        origin,
        axis,
        limits,
    })
}
