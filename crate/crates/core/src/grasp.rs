//! Grasp detection from gripper width and per-asset pose arbitration.
//!
//! A grasp is inferred when the fingers stop moving part-way through a
//! closing motion. While an asset is grasped it rides rigidly on the
//! gripper; otherwise it follows motion capture when that is reliable and a
//! point-mass fallback when it is not.

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mocap::{FilterStatus, FilteredPose};
use crate::pose::Pose;

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraspError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("gripper width must be non-negative, got {0}")]
    NegativeWidth(f64),
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error("invalid grasp config: {0}")]
    Config(String),
    #[error("unknown asset {0}")]
    UnknownAsset(u8),
    #[error("asset update at {time_ns} ns precedes previous update at {last_ns} ns")]
    TimeRegression { time_ns: u64, last_ns: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraspConfig {
    /// m/s
    pub stall_eps: f64,
    pub stall_count: u32,
    /// m
    pub closed_threshold: f64,
    /// m
    pub release_eps: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            stall_eps: 0.001,
            stall_count: 5,
            closed_threshold: 0.001,
            release_eps: 0.002,
        }
    }
}

impl GraspConfig {
    pub fn validate(&self) -> Result<(), GraspError> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !(positive(self.stall_eps)
            && positive(self.closed_threshold)
            && positive(self.release_eps)
            && self.stall_count > 0)
        {
            return Err(GraspError::Config("all thresholds must be strictly positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspPhase {
    Idle,
    Closing,
    Grasped,
}

impl GraspPhase {
    pub fn as_u8(self) -> u8 {
        match self {
            GraspPhase::Idle => 0,
            GraspPhase::Closing => 1,
            GraspPhase::Grasped => 2,
        }
    }
}

/// Gripper state machine: Idle → Closing → {Grasped, Idle}, Grasped → Idle.
#[derive(Debug, Clone, PartialEq)]
pub struct GripperFsm {
    config: GraspConfig,
    phase: GraspPhase,
    stalled: u32,
    grasp_width: f64,
}

impl GripperFsm {
    pub fn new(config: GraspConfig) -> Result<Self, GraspError> {
        config.validate()?;
        Ok(Self {
            config,
            phase: GraspPhase::Idle,
            stalled: 0,
            grasp_width: 0.0,
        })
    }

    pub fn phase(&self) -> GraspPhase {
        self.phase
    }

    /// Width at which the current grasp was detected.
    pub fn grasp_width(&self) -> Option<f64> {
        (self.phase == GraspPhase::Grasped).then_some(self.grasp_width)
    }

    pub fn step(&mut self, width: f64, d_width: f64) -> Result<GraspPhase, GraspError> {
        if !width.is_finite() || !d_width.is_finite() {
            return Err(GraspError::NonFinite("gripper sample"));
        }
        if width < 0.0 {
            return Err(GraspError::NegativeWidth(width));
        }
        let c = &self.config;
        let still = d_width.abs() < c.stall_eps;
        self.phase = match self.phase {
            GraspPhase::Idle if d_width < -c.stall_eps => {
                self.stalled = 0;
                GraspPhase::Closing
            }
            GraspPhase::Idle => GraspPhase::Idle,
            GraspPhase::Closing if still && width <= c.closed_threshold => GraspPhase::Idle,
            GraspPhase::Closing if still => {
                self.stalled += 1;
                if self.stalled >= c.stall_count {
                    self.grasp_width = width;
                    GraspPhase::Grasped
                } else {
                    GraspPhase::Closing
                }
            }
            // Fingers opening again before they stalled: abandoned.
            GraspPhase::Closing if d_width > 0.0 => GraspPhase::Idle,
            GraspPhase::Closing => {
                self.stalled = 0;
                GraspPhase::Closing
            }
            GraspPhase::Grasped if width > self.grasp_width + c.release_eps => GraspPhase::Idle,
            GraspPhase::Grasped => GraspPhase::Grasped,
        };
        Ok(self.phase)
    }
}

/// Runs a fresh machine over `(width, d_width)` samples and returns the
/// phase after each.
pub fn step_gripper_sequence(config: &GraspConfig, samples: &[(f64, f64)]) -> Result<Vec<GraspPhase>, GraspError> {
    let mut fsm = GripperFsm::new(config.clone())?;
    samples.iter().map(|&(w, dw)| fsm.step(w, dw)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetSource {
    Mocap,
    GripperAttached,
    PhysicsFallback,
}

impl AssetSource {
    pub fn as_u8(self) -> u8 {
        match self {
            AssetSource::Mocap => 0,
            AssetSource::GripperAttached => 1,
            AssetSource::PhysicsFallback => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FallbackState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FallbackParams {
    pub up: Unit<Vector3<f64>>,
    /// Ground plane height along `up`.
    pub ground_height: f64,
}

impl Default for FallbackParams {
    fn default() -> Self {
        Self {
            up: Vector3::z_axis(),
            ground_height: f64::NEG_INFINITY,
        }
    }
}

/// Point mass under gravity, stopped by the ground plane.
///
/// Uses a velocity-Verlet step, which is exact for constant acceleration.
pub fn fallback_step(state: &FallbackState, dt: f64, params: &FallbackParams) -> Result<FallbackState, GraspError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(GraspError::BadStep(dt));
    }
    let g = -GRAVITY * params.up.into_inner();
    let mut position = state.position + state.velocity * dt + 0.5 * g * dt * dt;
    let mut velocity = state.velocity + g * dt;
    let height = params.up.dot(&position);
    if height <= params.ground_height {
        position += params.up.into_inner() * (params.ground_height - height);
        velocity = Vector3::zeros();
    }
    if !position.iter().chain(velocity.iter()).all(|x| x.is_finite()) {
        return Err(GraspError::NonFinite("fallback state"));
    }
    Ok(FallbackState { position, velocity })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetConfig {
    /// Matches the mocap object id.
    pub id: u8,
    pub name: String,
    pub initial_xyz: [f64; 3],
    #[serde(default)]
    pub initial_rpy: [f64; 3],
    #[serde(default = "default_ground")]
    pub ground_height: f64,
    /// Mocap older than this is not trusted.
    #[serde(default = "default_mocap_timeout")]
    pub mocap_timeout_s: f64,
    /// Time to ease from the held pose back onto mocap.
    #[serde(default = "default_blend")]
    pub blend_s: f64,
    /// Robot whose gripper can pick this asset up.
    #[serde(default)]
    pub gripper_robot: Option<u8>,
}

fn default_ground() -> f64 {
    0.0
}
fn default_mocap_timeout() -> f64 {
    0.1
}
fn default_blend() -> f64 {
    0.1
}

/// What the asset tracker sees at one merge tick.
#[derive(Debug, Clone, Copy)]
pub struct AssetInputs<'a> {
    pub time_ns: u64,
    pub phase: GraspPhase,
    /// World pose of the grasping link, if its robot has reported.
    pub gripper: Option<&'a Pose>,
    /// Latest output of this asset's mocap filter.
    pub mocap: Option<&'a FilteredPose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssetTracker {
    config: AssetConfig,
    params: FallbackParams,
    source: AssetSource,
    pose: Pose,
    time_ns: Option<u64>,
    prev: Option<(u64, Pose)>,
    attach_offset: Pose,
    fallback: FallbackState,
    blend: Option<(u64, Pose)>,
    seen_mocap: bool,
    switches: u64,
}

impl AssetTracker {
    pub fn new(config: AssetConfig, up: Unit<Vector3<f64>>) -> Result<Self, GraspError> {
        let finite = config
            .initial_xyz
            .iter()
            .chain(&config.initial_rpy)
            .all(|x| x.is_finite());
        if !finite || config.ground_height.is_nan() {
            return Err(GraspError::NonFinite("asset config"));
        }
        if !(config.mocap_timeout_s > 0.0) || !(config.blend_s >= 0.0) {
            return Err(GraspError::Config("asset timeouts must be positive".into()));
        }
        let pose = Pose::from_xyz_rpy(config.initial_xyz, config.initial_rpy);
        Ok(Self {
            params: FallbackParams {
                up,
                ground_height: config.ground_height,
            },
            fallback: FallbackState {
                position: pose.translation,
                velocity: Vector3::zeros(),
            },
            config,
            source: AssetSource::PhysicsFallback,
            pose,
            time_ns: None,
            prev: None,
            attach_offset: Pose::identity(),
            blend: None,
            seen_mocap: false,
            switches: 0,
        })
    }

    pub fn config(&self) -> &AssetConfig {
        &self.config
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn source(&self) -> AssetSource {
        self.source
    }

    pub fn switches(&self) -> u64 {
        self.switches
    }

    fn mocap_reliable(&self, now_ns: u64, m: &FilteredPose) -> bool {
        let fresh = now_ns.saturating_sub(m.time_ns) as f64 * 1e-9 <= self.config.mocap_timeout_s;
        let good = match m.status {
            FilterStatus::Stable | FilterStatus::Relocated => true,
            FilterStatus::WarmingUp => !self.seen_mocap,
            FilterStatus::Holding => false,
        };
        fresh && good
    }

    /// Advances the asset to `inputs.time_ns`. The tick on which the source
    /// changes repeats the previous pose, so the pose never jumps.
    pub fn update(&mut self, inputs: AssetInputs) -> Result<(Pose, AssetSource), GraspError> {
        let now = inputs.time_ns;
        if let Some(last_ns) = self.time_ns {
            if now < last_ns {
                return Err(GraspError::TimeRegression { time_ns: now, last_ns });
            }
        }
        let desired = match (inputs.phase, inputs.gripper, inputs.mocap) {
            (GraspPhase::Grasped, Some(_), _) => AssetSource::GripperAttached,
            (_, _, Some(m)) if self.mocap_reliable(now, m) => AssetSource::Mocap,
            _ => AssetSource::PhysicsFallback,
        };

        let before = self.pose;
        if desired != self.source {
            self.switch_to(desired, now, inputs.gripper);
        } else {
            self.pose = match self.source {
                AssetSource::GripperAttached => match inputs.gripper {
                    Some(g) => g.compose(&self.attach_offset),
                    None => self.pose,
                },
                AssetSource::Mocap => self.follow_mocap(now, inputs.mocap),
                AssetSource::PhysicsFallback => {
                    if let Some(last_ns) = self.time_ns.filter(|&t| now > t) {
                        let dt = (now - last_ns) as f64 * 1e-9;
                        self.fallback = fallback_step(&self.fallback, dt, &self.params)?;
                    }
                    Pose::new(self.fallback.position, self.pose.rotation)
                }
            };
        }
        if self.source == AssetSource::Mocap {
            self.seen_mocap = true;
        }
        if let Some(t) = self.time_ns.filter(|&t| t != now) {
            self.prev = Some((t, before));
        }
        self.time_ns = Some(now);
        Ok((self.pose, self.source))
    }

    fn switch_to(&mut self, to: AssetSource, now: u64, gripper: Option<&Pose>) {
        self.switches += 1;
        let held = self.pose;
        match to {
            AssetSource::GripperAttached => {
                if let Some(g) = gripper {
                    self.attach_offset = g.inverse().compose(&held);
                }
            }
            AssetSource::PhysicsFallback => {
                let velocity = match (self.prev, self.time_ns) {
                    (Some((t0, p0)), Some(t1)) if t1 > t0 => {
                        (held.translation - p0.translation) / ((t1 - t0) as f64 * 1e-9)
                    }
                    _ => Vector3::zeros(),
                };
                self.fallback = FallbackState {
                    position: held.translation,
                    velocity,
                };
            }
            AssetSource::Mocap => self.blend = Some((now, held)),
        }
        self.source = to;
        self.pose = held;
    }

    fn follow_mocap(&mut self, now: u64, mocap: Option<&FilteredPose>) -> Pose {
        let Some(target) = mocap.map(FilteredPose::pose) else {
            return self.pose;
        };
        let Some((start, anchor)) = self.blend else {
            return target;
        };
        let blend_ns = self.config.blend_s * 1e9;
        let s = (now - start) as f64 / blend_ns;
        if !(s < 1.0) {
            self.blend = None;
            return target;
        }
        let w = 1.0 - s;
        Pose::new(
            anchor.translation * w + target.translation * (1.0 - w),
            anchor.rotation.slerp(&target.rotation, 1.0 - w),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use proptest::prelude::*;

    const DT: f64 = 1.0 / 60.0;

    /// Widths sampled at the twin rate; the first rate is taken as zero.
    fn with_rates(widths: &[f64]) -> Vec<(f64, f64)> {
        widths
            .iter()
            .enumerate()
            .map(|(i, &w)| (w, if i == 0 { 0.0 } else { (w - widths[i - 1]) / DT }))
            .collect()
    }

    fn run(widths: &[f64]) -> Vec<GraspPhase> {
        step_gripper_sequence(&GraspConfig::default(), &with_rates(widths)).unwrap()
    }

    #[test]
    fn full_closure_is_not_a_grasp() {
        let mut widths: Vec<f64> = (0..=8).map(|k| 0.08 - 0.01 * k as f64).collect();
        widths[8] = 0.0;
        widths.extend([0.0; 10]);
        let phases = run(&widths);
        assert_eq!(phases[1], GraspPhase::Closing);
        assert!(!phases.contains(&GraspPhase::Grasped));
        assert_eq!(*phases.last().unwrap(), GraspPhase::Idle);
    }

    #[test]
    fn plateau_mid_closure_is_a_grasp() {
        // 0.08 → 0.041 over four samples, then still.
        let mut widths = vec![0.08, 0.07, 0.06, 0.05, 0.041];
        widths.extend([0.041; 5]);
        let phases = run(&widths);
        use GraspPhase::*;
        assert_eq!(
            phases,
            vec![Idle, Closing, Closing, Closing, Closing, Closing, Closing, Closing, Closing, Grasped]
        );
    }

    #[test]
    fn opening_releases() {
        let mut widths = vec![0.08, 0.06, 0.041, 0.041, 0.041, 0.041, 0.041, 0.041];
        let phases = run(&widths);
        assert_eq!(*phases.last().unwrap(), GraspPhase::Grasped);
        widths.push(0.041 + 2.0 * 0.002);
        assert_eq!(*run(&widths).last().unwrap(), GraspPhase::Idle);
    }

    #[test]
    fn small_squeeze_keeps_grasp() {
        let widths = vec![0.08, 0.06, 0.041, 0.041, 0.041, 0.041, 0.041, 0.041, 0.0415, 0.040];
        assert_eq!(*run(&widths).last().unwrap(), GraspPhase::Grasped);
    }

    #[test]
    fn reopening_abandons_closing() {
        let phases = run(&[0.08, 0.06, 0.07]);
        assert_eq!(phases[2], GraspPhase::Idle);
    }

    #[test]
    fn rejects_bad_samples_and_config() {
        let mut fsm = GripperFsm::new(GraspConfig::default()).unwrap();
        assert!(fsm.step(-0.01, 0.0).is_err());
        assert!(fsm.step(0.01, f64::NAN).is_err());
        let bad = GraspConfig {
            stall_count: 0,
            ..Default::default()
        };
        assert!(GripperFsm::new(bad).is_err());
    }

    #[test]
    fn free_fall_matches_half_g_t_squared() {
        let mut s = FallbackState {
            position: Vector3::new(0.0, 0.0, 1.0),
            velocity: Vector3::zeros(),
        };
        for _ in 0..100 {
            s = fallback_step(&s, 1e-3, &FallbackParams::default()).unwrap();
        }
        let expected = 1.0 - 0.5 * GRAVITY * 0.1 * 0.1;
        assert!((s.position.z - expected).abs() < 1e-6);
        assert!((s.position.z - 1.0 + 0.04905).abs() < 1e-4);
    }

    #[test]
    fn ground_stops_fall() {
        let params = FallbackParams {
            ground_height: 0.0,
            ..Default::default()
        };
        let mut s = FallbackState {
            position: Vector3::new(0.0, 0.0, 0.01),
            velocity: Vector3::zeros(),
        };
        for _ in 0..200 {
            s = fallback_step(&s, 1e-3, &params).unwrap();
        }
        assert_eq!(s.position.z, 0.0);
        assert_eq!(s.velocity, Vector3::zeros());
        assert!(fallback_step(&s, 0.0, &params).is_err());
    }

    #[test]
    fn gravity_follows_up_axis() {
        let params = FallbackParams {
            up: Vector3::y_axis(),
            ..Default::default()
        };
        let s = FallbackState {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
        };
        let s = fallback_step(&s, 0.1, &params).unwrap();
        assert!(s.position.x == 0.0 && s.position.z == 0.0 && s.position.y < 0.0);
    }

    fn asset() -> AssetTracker {
        AssetTracker::new(
            AssetConfig {
                id: 1,
                name: "box".into(),
                initial_xyz: [0.5, 0.0, 0.2],
                initial_rpy: [0.0; 3],
                ground_height: 0.0,
                mocap_timeout_s: 0.1,
                blend_s: 0.05,
                gripper_robot: Some(1),
            },
            Vector3::z_axis(),
        )
        .unwrap()
    }

    fn mocap(time_ns: u64, p: Vector3<f64>, status: FilterStatus) -> FilteredPose {
        FilteredPose {
            time_ns,
            position: p,
            rotation: UnitQuaternion::identity(),
            status,
        }
    }

    const TICK: u64 = 16_666_667;

    #[test]
    fn grasped_overrides_mocap_and_rides_gripper() {
        let mut a = asset();
        let gripper = Pose::from_xyz_rpy([0.5, 0.0, 0.3], [0.0, 0.0, 0.4]);
        let m = mocap(0, Vector3::new(0.5, 0.0, 0.2), FilterStatus::Stable);
        let (p0, src) = a
            .update(AssetInputs {
                time_ns: 0,
                phase: GraspPhase::Grasped,
                gripper: Some(&gripper),
                mocap: Some(&m),
            })
            .unwrap();
        assert_eq!(src, AssetSource::GripperAttached);
        let local = gripper.inverse().compose(&p0);
        for k in 1..20u64 {
            let g = Pose::from_xyz_rpy([0.5 + 0.01 * k as f64, 0.0, 0.3], [0.0, 0.1 * k as f64, 0.4]);
            let (p, src) = a
                .update(AssetInputs {
                    time_ns: k * TICK,
                    phase: GraspPhase::Grasped,
                    gripper: Some(&g),
                    mocap: Some(&m),
                })
                .unwrap();
            assert_eq!(src, AssetSource::GripperAttached);
            let rel = g.inverse().compose(&p);
            assert!((rel.translation - local.translation).norm() < 1e-12);
            assert!(rel.rotation.angle_to(&local.rotation) < 1e-9);
        }
    }

    #[test]
    fn release_returns_to_mocap_without_jump() {
        let mut a = asset();
        let g = Pose::from_xyz_rpy([0.5, 0.0, 0.3], [0.0; 3]);
        let none = AssetInputs {
            time_ns: 0,
            phase: GraspPhase::Grasped,
            gripper: Some(&g),
            mocap: None,
        };
        let (held, _) = a.update(none).unwrap();
        let m = mocap(TICK, Vector3::new(0.6, 0.0, 0.2), FilterStatus::Stable);
        let (p, src) = a
            .update(AssetInputs {
                time_ns: TICK,
                phase: GraspPhase::Idle,
                gripper: Some(&g),
                mocap: Some(&m),
            })
            .unwrap();
        assert_eq!(src, AssetSource::Mocap);
        assert_eq!(p, held);
        let m = mocap(10 * TICK, Vector3::new(0.6, 0.0, 0.2), FilterStatus::Stable);
        let (p, _) = a
            .update(AssetInputs {
                time_ns: 10 * TICK,
                phase: GraspPhase::Idle,
                gripper: Some(&g),
                mocap: Some(&m),
            })
            .unwrap();
        assert_eq!(p.translation, m.position);
    }

    #[test]
    fn release_without_mocap_falls() {
        let mut a = asset();
        let g = Pose::from_xyz_rpy([0.5, 0.0, 0.5], [0.0; 3]);
        a.update(AssetInputs {
            time_ns: 0,
            phase: GraspPhase::Grasped,
            gripper: Some(&g),
            mocap: None,
        })
        .unwrap();
        a.update(AssetInputs {
            time_ns: TICK,
            phase: GraspPhase::Grasped,
            gripper: Some(&g),
            mocap: None,
        })
        .unwrap();
        let (p_switch, src) = a
            .update(AssetInputs {
                time_ns: 2 * TICK,
                phase: GraspPhase::Idle,
                gripper: Some(&g),
                mocap: None,
            })
            .unwrap();
        assert_eq!(src, AssetSource::PhysicsFallback);
        let z0 = p_switch.translation.z;
        let (p, _) = a
            .update(AssetInputs {
                time_ns: 8 * TICK,
                phase: GraspPhase::Idle,
                gripper: Some(&g),
                mocap: None,
            })
            .unwrap();
        let t = 6.0 * TICK as f64 * 1e-9;
        assert!((p.translation.z - (z0 - 0.5 * GRAVITY * t * t)).abs() < 1e-9);
    }

    #[test]
    fn warm_up_trusted_only_before_first_mocap() {
        let mut a = asset();
        let m = mocap(0, Vector3::new(0.5, 0.0, 0.2), FilterStatus::WarmingUp);
        let inputs = |t, m| AssetInputs {
            time_ns: t,
            phase: GraspPhase::Idle,
            gripper: None,
            mocap: Some(m),
        };
        assert_eq!(a.update(inputs(0, &m)).unwrap().1, AssetSource::Mocap);
        let held = mocap(TICK, m.position, FilterStatus::Holding);
        assert_eq!(a.update(inputs(TICK, &held)).unwrap().1, AssetSource::PhysicsFallback);
        let warm = mocap(2 * TICK, m.position, FilterStatus::WarmingUp);
        assert_eq!(
            a.update(inputs(2 * TICK, &warm)).unwrap().1,
            AssetSource::PhysicsFallback
        );
        let stale = mocap(0, m.position, FilterStatus::Stable);
        assert_eq!(
            a.update(inputs(20 * TICK, &stale)).unwrap().1,
            AssetSource::PhysicsFallback
        );
    }

    proptest! {
        #[test]
        fn switches_never_jump(events in proptest::collection::vec((0u8..3, any::<bool>(), -0.2f64..0.2), 1..80)) {
            let mut a = asset();
            let mut last: Option<(Pose, AssetSource)> = None;
            for (k, (phase, tracked, dx)) in events.into_iter().enumerate() {
                let t = k as u64 * TICK;
                let phase = [GraspPhase::Idle, GraspPhase::Closing, GraspPhase::Grasped][phase as usize];
                let g = Pose::from_xyz_rpy([0.5 + dx, 0.0, 0.4], [0.0, 0.0, dx]);
                let status = if tracked { FilterStatus::Stable } else { FilterStatus::Holding };
                let m = mocap(t, Vector3::new(0.5 - dx, 0.1, 0.2), status);
                let out = a.update(AssetInputs { time_ns: t, phase, gripper: Some(&g), mocap: Some(&m) }).unwrap();
                if let Some((prev, src)) = last {
                    if src != out.1 {
                        prop_assert_eq!(prev, out.0);
                    }
                }
                last = Some(out);
            }
        }
    }
}
