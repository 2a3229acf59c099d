//! Scenario files: one TOML document describing a full emulated run.
//!
//! Relative paths inside a scenario resolve against the directory of the
//! file. The robot may be `builtin:panda` instead of a path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grasp::{AssetConfig, GraspConfig};
use crate::mocap::FilterConfig;
use crate::pose::Pose;
use crate::robot_model::{parse_urdf, ModelError, RobotModel};
use crate::teleop::{ControllerGains, ExternalPush, LeaderProfile, TeleopConfig, TeleopError, CONTROL_PERIOD_NS};
use crate::transport::{DelayModel, LinkConfig, LinkError, TWIN_RATE_HZ};
use crate::twin::{derive_seed, streams, TwinConfig, TwinError};
use crate::zones::ProhibitedZone;

pub const PANDA_URDF: &str = include_str!("../../../assets/panda.urdf");
pub const DEFAULT_SCENARIO: &str = include_str!("../../../scenarios/default.toml");
pub const BUILTIN_PANDA: &str = "builtin:panda";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{link} link: {source}")]
    Link { link: &'static str, source: LinkError },
    #[error(transparent)]
    Teleop(#[from] TeleopError),
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Links {
    pub teleop: LinkConfig,
    pub telemetry: LinkConfig,
    pub mocap: LinkConfig,
    pub command: LinkConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthMove {
    pub at_s: f64,
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

/// A mocap-tracked asset plus what the synthetic tracker does with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetScenario {
    pub id: u8,
    pub name: String,
    pub initial_xyz: [f64; 3],
    #[serde(default)]
    pub initial_rpy: [f64; 3],
    #[serde(default)]
    pub ground_height: f64,
    #[serde(default = "default_mocap_timeout")]
    pub mocap_timeout_s: f64,
    #[serde(default = "default_blend")]
    pub blend_s: f64,
    #[serde(default)]
    pub gripper_robot: Option<u8>,
    /// `[start_s, end_s)` windows where the tracker reports the object lost.
    #[serde(default)]
    pub occlusions: Vec<[f64; 2]>,
    /// Jumps of the true pose; the object holds each pose until the next.
    #[serde(default)]
    pub moves: Vec<TruthMove>,
}

fn default_mocap_timeout() -> f64 {
    0.1
}
fn default_blend() -> f64 {
    0.1
}

impl AssetScenario {
    pub fn asset_config(&self) -> AssetConfig {
        AssetConfig {
            id: self.id,
            name: self.name.clone(),
            initial_xyz: self.initial_xyz,
            initial_rpy: self.initial_rpy,
            ground_height: self.ground_height,
            mocap_timeout_s: self.mocap_timeout_s,
            blend_s: self.blend_s,
            gripper_robot: self.gripper_robot,
        }
    }

    /// True pose at `t` seconds.
    pub fn truth_at(&self, t: f64) -> Pose {
        match self.moves.iter().rev().find(|m| m.at_s <= t) {
            Some(m) => Pose::from_xyz_rpy(m.xyz, m.rpy),
            None => Pose::from_xyz_rpy(self.initial_xyz, self.initial_rpy),
        }
    }

    pub fn occluded_at(&self, t: f64) -> bool {
        self.occlusions.iter().any(|&[a, b]| t >= a && t < b)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub stats: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_s: f64,
    /// URDF path or `builtin:panda`.
    pub robot: String,
    #[serde(default = "default_robot_id")]
    pub robot_id: u8,
    pub ee_link: String,
    pub gripper_link: String,
    #[serde(default)]
    pub finger_joints: Vec<String>,
    #[serde(default = "yes")]
    pub clamp_limits: bool,
    #[serde(default)]
    pub base_xyz: [f64; 3],
    #[serde(default)]
    pub base_rpy: [f64; 3],
    /// Mocap object standing in for the robot base.
    #[serde(default)]
    pub station_object: Option<u8>,
    #[serde(default = "default_mocap_rate")]
    pub mocap_rate_hz: u32,
    /// Gaussian position noise of the synthetic tracker, m.
    #[serde(default = "default_tracker_noise")]
    pub tracker_noise_m: f64,
    #[serde(default)]
    pub command_hold_ms: Option<f64>,
    #[serde(default)]
    pub links: Links,
    /// Twin-side delay from socket read to state application.
    #[serde(default)]
    pub processing: DelayModel,
    #[serde(default)]
    pub gains: Option<ControllerGains>,
    /// Defaults to holding the middle of every joint range.
    #[serde(default)]
    pub leader: Option<LeaderProfile>,
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub pushes: Vec<ExternalPush>,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub grasp: GraspConfig,
    #[serde(default)]
    pub assets: Vec<AssetScenario>,
    #[serde(default)]
    pub zones: Vec<ProhibitedZone>,
    #[serde(default)]
    pub outputs: Outputs,
    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_robot_id() -> u8 {
    1
}
fn yes() -> bool {
    true
}
fn default_mocap_rate() -> u32 {
    100
}
fn default_tracker_noise() -> f64 {
    1e-4
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ScenarioError> {
        let mut config: ScenarioConfig = toml::from_str(text)?;
        config.base_dir = base_dir.into();
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, dir)
    }

    /// The scenario shipped with the library; outputs resolve against the
    /// current directory.
    pub fn builtin_default() -> Self {
        Self::from_toml(DEFAULT_SCENARIO, "").expect("bundled scenario parses")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load_robot(&self) -> Result<RobotModel, ScenarioError> {
        if self.robot == BUILTIN_PANDA {
            return Ok(parse_urdf(PANDA_URDF)?);
        }
        let path = self.resolve(Path::new(&self.robot));
        let text = std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path, source })?;
        Ok(parse_urdf(&text)?)
    }

    pub fn base_pose(&self) -> Pose {
        Pose::from_xyz_rpy(self.base_xyz, self.base_rpy)
    }

    /// Link config with its seed folded into the scenario seed.
    pub fn link(&self, stream: u64) -> LinkConfig {
        let mut link = match stream {
            streams::TELEOP => self.links.teleop.clone(),
            streams::TELEMETRY => self.links.telemetry.clone(),
            streams::MOCAP => self.links.mocap.clone(),
            _ => self.links.command.clone(),
        };
        link.seed ^= derive_seed(self.seed, stream);
        link
    }

    pub fn control_ticks(&self) -> u64 {
        (self.duration_s * (1e9 / CONTROL_PERIOD_NS as f64)).round() as u64
    }

    pub fn merge_ticks(&self) -> u64 {
        (self.duration_s * TWIN_RATE_HZ as f64).round() as u64
    }

    fn finger_indices(&self, model: &RobotModel) -> Result<Vec<usize>, ScenarioError> {
        self.finger_joints
            .iter()
            .map(|name| {
                model
                    .movable_index(name)
                    .ok_or_else(|| invalid(format!("finger joint {name:?} is not a movable joint")))
            })
            .collect()
    }

    /// Checks everything that can be checked without running, and builds
    /// the per-component configs.
    pub fn build(&self) -> Result<(RobotModel, TeleopConfig, TwinConfig), ScenarioError> {
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return Err(invalid(format!("duration_s must be >= 0, got {}", self.duration_s)));
        }
        if self.mocap_rate_hz == 0 || self.mocap_rate_hz > 1000 {
            return Err(invalid("mocap_rate_hz must be in 1..=1000"));
        }
        if !(self.tracker_noise_m.is_finite() && self.tracker_noise_m >= 0.0) {
            return Err(invalid("tracker_noise_m must be >= 0"));
        }
        let base = self.base_xyz.iter().chain(&self.base_rpy).all(|x| x.is_finite());
        if !base {
            return Err(invalid("base pose must be finite"));
        }
        let check = |name: &'static str, r: Result<(), LinkError>| {
            r.map_err(|source| ScenarioError::Link { link: name, source })
        };
        check("teleop", self.links.teleop.validate_datagram())?;
        check("telemetry", self.links.telemetry.validate_datagram())?;
        check("mocap", self.links.mocap.validate_datagram())?;
        check("command", self.links.command.validate_stream())?;
        for a in &self.assets {
            let times = a.occlusions.iter().flatten().chain(a.moves.iter().map(|m| &m.at_s));
            if times.copied().any(|t| !t.is_finite()) {
                return Err(invalid(format!("asset {} has non-finite times", a.id)));
            }
            if a.occlusions.iter().any(|&[s, e]| s > e) {
                return Err(invalid(format!("asset {} has an inverted occlusion window", a.id)));
            }
        }

        let model = self.load_robot()?;
        let fingers = self.finger_indices(&model)?;
        let profile = match &self.leader {
            Some(p) => p.clone(),
            None => LeaderProfile::hold_midpoint(&model),
        };
        let mut teleop = TeleopConfig::new(&model, profile);
        teleop.robot_id = self.robot_id;
        if let Some(g) = &self.gains {
            teleop.gains = g.clone();
        }
        teleop.teleop_link = self.link(streams::TELEOP);
        teleop.telemetry_link = self.link(streams::TELEMETRY);
        teleop.finger_joints = fingers.clone();
        teleop.initial = self.initial.clone();
        teleop.pushes = self.pushes.clone();
        teleop.base = self.base_pose();
        teleop.ee_link = self.ee_link.clone();
        if let Some(ms) = self.command_hold_ms {
            if !(ms.is_finite() && ms >= 0.0) {
                return Err(invalid("command_hold_ms must be >= 0"));
            }
            teleop.command_hold_ns = (ms * 1e6).round() as u64;
        }

        let twin = TwinConfig {
            robot_id: self.robot_id,
            model: model.clone(),
            clamp_limits: self.clamp_limits,
            finger_joints: fingers,
            ee_link: self.ee_link.clone(),
            gripper_link: self.gripper_link.clone(),
            base: self.base_pose(),
            station_object: self.station_object,
            filter: self.filter.clone(),
            grasp: self.grasp.clone(),
            assets: self.assets.iter().map(AssetScenario::asset_config).collect(),
            zones: self.zones.clone(),
            processing: self.processing.clone(),
            seed: self.seed,
        };
        twin.validate()?;
        // Constructing the simulator runs its own validation.
        crate::teleop::TeleopSim::new(model.clone(), teleop.clone())?;
        Ok((model, teleop, twin))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.build().map(|_| ())
    }
}
