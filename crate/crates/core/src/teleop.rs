//! Simulated leader–follower teleoperation at 1 kHz.
//!
//! The leader follows a synthetic trajectory standing in for the operator's
//! hand. The follower tracks it with a per-joint PD law (joint impedance)
//! on a unit-inertia plant, and any external joint torque on the follower is
//! reflected back to the leader. Follower telemetry is throttled to the twin
//! rate and sent over an emulated datagram link.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pose::Pose;
use crate::robot_model::{position_jacobian, JointState, ModelError, RobotModel};
use crate::transport::{
    encode_telemetry, CodecError, Command, CommandFrame, DatagramLink, Delivery, LinkConfig, LinkError,
    TelemetryPacket, Throttle, ThrottleError, TWIN_RATE_HZ,
};

pub const CONTROL_RATE_HZ: u64 = 1000;
pub const CONTROL_PERIOD_NS: u64 = 1_000_000_000 / CONTROL_RATE_HZ;
pub const DEFAULT_KP: f64 = 100.0;
pub const DEFAULT_KD: f64 = 20.0;

#[derive(Debug, Error)]
pub enum TeleopError {
    #[error("expected {expected} joints, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error("gains must be non-negative")]
    NegativeGain,
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("joint {joint}: trajectory range [{low}, {high}] leaves limits [{lower}, {upper}]")]
    OutOfLimits {
        joint: String,
        low: f64,
        high: f64,
        lower: f64,
        upper: f64,
    },
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("duration must be finite and non-negative, got {0}")]
    Duration(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Throttle(#[from] ThrottleError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FollowerState {
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
}

impl FollowerState {
    pub fn at_rest(q: Vec<f64>) -> Self {
        let dq = vec![0.0; q.len()];
        Self { q, dq }
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.dq.iter().map(|v| v * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
}

impl ControllerGains {
    pub fn uniform(dof: usize, kp: f64, kd: f64) -> Self {
        Self {
            kp: vec![kp; dof],
            kd: vec![kd; dof],
        }
    }

    pub fn default_for(dof: usize) -> Self {
        Self::uniform(dof, DEFAULT_KP, DEFAULT_KD)
    }

    pub fn validate(&self, dof: usize) -> Result<(), TeleopError> {
        check_len(dof, self.kp.len())?;
        check_len(dof, self.kd.len())?;
        if self.kp.iter().chain(&self.kd).any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(TeleopError::NegativeGain);
        }
        Ok(())
    }
}

fn check_len(expected: usize, actual: usize) -> Result<(), TeleopError> {
    if expected != actual {
        return Err(TeleopError::Dimension { expected, actual });
    }
    Ok(())
}

fn all_finite(v: &[f64], what: &'static str) -> Result<(), TeleopError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(TeleopError::NonFinite(what))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineJoint {
    pub center: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub frequency_hz: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub at_s: f64,
    pub positions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JointProfile {
    /// `q_i(t) = c_i + A_i sin(2π f_i t + φ_i)`.
    Sinusoid { joints: Vec<SineJoint> },
    /// Piecewise-constant poses; each step holds until the next one.
    Scripted { steps: Vec<ScriptStep> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperKey {
    pub at_s: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderProfile {
    pub joints: JointProfile,
    /// Piecewise-linear gripper opening; empty means fully open (0.08 m).
    #[serde(default)]
    pub gripper: Vec<GripperKey>,
}

const DEFAULT_GRIPPER_WIDTH: f64 = 0.08;

impl LeaderProfile {
    /// A motionless leader holding the midpoint of every joint range
    /// (zero for unbounded joints).
    pub fn hold_midpoint(model: &RobotModel) -> Self {
        let joints = model
            .movable_joints()
            .map(|j| {
                let mid = 0.5 * (j.limits.lower + j.limits.upper);
                SineJoint {
                    center: if mid.is_finite() { mid } else { 0.0 },
                    amplitude: 0.0,
                    frequency_hz: 0.0,
                    phase_rad: 0.0,
                }
            })
            .collect();
        Self {
            joints: JointProfile::Sinusoid { joints },
            gripper: Vec::new(),
        }
    }

    pub fn validate(&self, model: &RobotModel) -> Result<(), TeleopError> {
        let dof = model.movable_count();
        let check = |joint: &crate::robot_model::Joint, low: f64, high: f64| {
            if low < joint.limits.lower || high > joint.limits.upper {
                return Err(TeleopError::OutOfLimits {
                    joint: joint.name.clone(),
                    low,
                    high,
                    lower: joint.limits.lower,
                    upper: joint.limits.upper,
                });
            }
            Ok(())
        };
        match &self.joints {
            JointProfile::Sinusoid { joints } => {
                check_len(dof, joints.len())?;
                for (s, joint) in joints.iter().zip(model.movable_joints()) {
                    let vals = [s.center, s.amplitude, s.frequency_hz, s.phase_rad];
                    all_finite(&vals, "sinusoid parameter")?;
                    let a = s.amplitude.abs();
                    check(joint, s.center - a, s.center + a)?;
                }
            }
            JointProfile::Scripted { steps } => {
                if steps.is_empty() {
                    return Err(TeleopError::Profile("scripted profile has no steps".into()));
                }
                let mut last = f64::NEG_INFINITY;
                for step in steps {
                    if !(step.at_s.is_finite() && step.at_s >= last) {
                        return Err(TeleopError::Profile("script steps must be time-ordered".into()));
                    }
                    last = step.at_s;
                    check_len(dof, step.positions.len())?;
                    all_finite(&step.positions, "script position")?;
                    for (&q, joint) in step.positions.iter().zip(model.movable_joints()) {
                        check(joint, q, q)?;
                    }
                }
            }
        }
        let mut last = f64::NEG_INFINITY;
        for key in &self.gripper {
            if !(key.at_s.is_finite() && key.at_s >= last && key.width.is_finite() && key.width >= 0.0) {
                return Err(TeleopError::Profile(
                    "gripper keys must be time-ordered with non-negative widths".into(),
                ));
            }
            last = key.at_s;
        }
        Ok(())
    }

    fn gripper_at(&self, t: f64) -> (f64, f64) {
        let keys = &self.gripper;
        match keys.len() {
            0 => (DEFAULT_GRIPPER_WIDTH, 0.0),
            _ if t < keys[0].at_s => (keys[0].width, 0.0),
            n if t >= keys[n - 1].at_s => (keys[n - 1].width, 0.0),
            _ => {
                let i = keys.partition_point(|k| k.at_s <= t) - 1;
                let (a, b) = (keys[i], keys[i + 1]);
                let span = b.at_s - a.at_s;
                if span <= 0.0 {
                    return (b.width, 0.0);
                }
                let slope = (b.width - a.width) / span;
                (a.width + slope * (t - a.at_s), slope)
            }
        }
    }
}

/// Leader joint state at time `t` seconds. Velocities are the analytic
/// derivative of the profile; efforts are zero.
pub fn leader_trajectory(t: f64, profile: &LeaderProfile) -> Result<JointState, TeleopError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(TeleopError::NegativeTime(t));
    }
    let (positions, velocities) = match &profile.joints {
        JointProfile::Sinusoid { joints } => joints
            .iter()
            .map(|s| {
                let w = TAU * s.frequency_hz;
                let arg = w * t + s.phase_rad;
                (s.center + s.amplitude * arg.sin(), s.amplitude * w * arg.cos())
            })
            .unzip(),
        JointProfile::Scripted { steps } => {
            let i = steps.partition_point(|s| s.at_s <= t).saturating_sub(1);
            let q = steps
                .get(i)
                .map(|s| s.positions.clone())
                .ok_or_else(|| TeleopError::Profile("scripted profile has no steps".into()))?;
            let dq = vec![0.0; q.len()];
            (q, dq)
        }
    };
    let (gripper_width, gripper_velocity) = profile.gripper_at(t);
    let efforts = vec![0.0; positions.len()];
    Ok(JointState {
        time_ns: (t * 1e9).round() as u64,
        positions,
        velocities,
        efforts,
        gripper_width,
        gripper_velocity,
    })
}

/// One PD control step on a unit-inertia plant:
/// `τ = kp (q_L − q_F) + kd (dq_L − dq_F) + τ_ext`, then semi-implicit Euler
/// `dq += τ dt; q += dq dt`.
#[allow(clippy::needless_range_loop)]
pub fn pd_step(
    leader: &JointState,
    follower: &FollowerState,
    gains: &ControllerGains,
    ext: &[f64],
    dt: f64,
) -> Result<(Vec<f64>, FollowerState), TeleopError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(TeleopError::BadStep(dt));
    }
    let n = follower.q.len();
    for len in [
        follower.dq.len(),
        leader.positions.len(),
        leader.velocities.len(),
        gains.kp.len(),
        gains.kd.len(),
        ext.len(),
    ] {
        check_len(n, len)?;
    }
    all_finite(&leader.positions, "leader position")?;
    all_finite(&leader.velocities, "leader velocity")?;
    all_finite(&follower.q, "follower position")?;
    all_finite(&follower.dq, "follower velocity")?;
    all_finite(ext, "external torque")?;

    let mut torque = Vec::with_capacity(n);
    let mut next = follower.clone();
    for i in 0..n {
        let tau = gains.kp[i] * (leader.positions[i] - follower.q[i])
            + gains.kd[i] * (leader.velocities[i] - follower.dq[i])
            + ext[i];
        next.dq[i] += tau * dt;
        next.q[i] += next.dq[i] * dt;
        torque.push(tau);
    }
    Ok((torque, next))
}

/// External follower torque as felt at the leader: same joints, same sign.
pub fn force_feedback(ext: &[f64]) -> Vec<f64> {
    ext.to_vec()
}

/// Maps a Cartesian force on `link`'s origin to joint torques, `τ = Jᵀ F`,
/// with `J` from central differences of forward kinematics.
pub fn cartesian_force_to_torque(
    model: &RobotModel,
    q: &[f64],
    base: &Pose,
    link: &str,
    force: [f64; 3],
) -> Result<Vec<f64>, TeleopError> {
    let f = nalgebra::Vector3::from(force);
    let jac = position_jacobian(model, q, base, link, 1e-6)?;
    Ok(jac.iter().map(|col| col.dot(&f)).collect())
}

/// Timed joint-space push on the follower, e.g. a person leaning on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalPush {
    pub start_s: f64,
    pub end_s: f64,
    pub torque: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeleopConfig {
    pub robot_id: u8,
    pub gains: ControllerGains,
    pub profile: LeaderProfile,
    /// Leader→follower state and follower→leader feedback.
    pub teleop_link: LinkConfig,
    /// Follower→twin telemetry after throttling.
    pub telemetry_link: LinkConfig,
    /// Movable-joint indices driven directly by the gripper width.
    pub finger_joints: Vec<usize>,
    /// Follower start pose; defaults to the leader at t = 0.
    pub initial: Option<Vec<f64>>,
    pub pushes: Vec<ExternalPush>,
    /// Robot base in the world, used to map zone forces to joint torques.
    pub base: Pose,
    /// Link whose origin receives zone counterforces.
    pub ee_link: String,
    /// How long a zone command keeps acting without a refresh.
    pub command_hold_ns: u64,
}

impl TeleopConfig {
    pub fn new(model: &RobotModel, profile: LeaderProfile) -> Self {
        Self {
            robot_id: 1,
            gains: ControllerGains::default_for(model.movable_count()),
            profile,
            teleop_link: LinkConfig::default(),
            telemetry_link: LinkConfig::default(),
            finger_joints: Vec::new(),
            initial: None,
            pushes: Vec::new(),
            base: Pose::identity(),
            ee_link: model.links.last().map(|l| l.name.clone()).unwrap_or_default(),
            command_hold_ns: 2 * 1_000_000_000 / TWIN_RATE_HZ as u64 + 1,
        }
    }
}

/// Everything that happened in one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub time_ns: u64,
    pub leader: JointState,
    pub follower: FollowerState,
    pub torque: Vec<f64>,
    pub external: Vec<f64>,
    /// Force feedback currently applied at the leader.
    pub leader_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentTelemetry {
    pub seq: u32,
    /// Throttle slot the sample was chosen for.
    pub tick_ns: u64,
    pub send_ns: u64,
    pub bytes: Vec<u8>,
}

/// Steps the leader/follower pair and emits throttled follower telemetry.
#[derive(Debug)]
pub struct TeleopSim {
    model: RobotModel,
    config: TeleopConfig,
    follower: FollowerState,
    leader_ref: Option<(u64, JointState)>,
    forward: DatagramLink<JointState>,
    feedback: DatagramLink<Vec<f64>>,
    leader_bias: (u64, Vec<f64>),
    throttle: Throttle<JointState>,
    telemetry: DatagramLink<Vec<u8>>,
    zone_torque: Vec<f64>,
    zone_until_ns: u64,
    seq: u32,
    tick: u64,
}

impl TeleopSim {
    pub fn new(model: RobotModel, config: TeleopConfig) -> Result<Self, TeleopError> {
        let dof = model.movable_count();
        config.gains.validate(dof)?;
        config.profile.validate(&model)?;
        if let Some(&bad) = config.finger_joints.iter().find(|&&i| i >= dof) {
            return Err(TeleopError::Dimension {
                expected: dof,
                actual: bad + 1,
            });
        }
        for push in &config.pushes {
            check_len(dof, push.torque.len())?;
            all_finite(&push.torque, "push torque")?;
        }
        if !model.has_link(&config.ee_link) {
            return Err(ModelError::UnknownLink(config.ee_link.clone()).into());
        }
        let start = match &config.initial {
            Some(q) => {
                check_len(dof, q.len())?;
                all_finite(q, "initial position")?;
                q.clone()
            }
            None => leader_trajectory(0.0, &config.profile)?.positions,
        };
        let mut feedback_link = config.teleop_link.clone();
        feedback_link.seed = feedback_link.seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        Ok(Self {
            forward: DatagramLink::new(config.teleop_link.clone())?,
            feedback: DatagramLink::new(feedback_link)?,
            telemetry: DatagramLink::new(config.telemetry_link.clone())?,
            throttle: Throttle::new(TWIN_RATE_HZ)?,
            follower: FollowerState::at_rest(start),
            leader_ref: None,
            leader_bias: (0, vec![0.0; dof]),
            zone_torque: vec![0.0; dof],
            zone_until_ns: 0,
            seq: 0,
            tick: 0,
            model,
            config,
        })
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn follower(&self) -> &FollowerState {
        &self.follower
    }

    pub fn ticks(&self) -> u64 {
        self.tick
    }

    pub fn now_ns(&self) -> u64 {
        self.tick * CONTROL_PERIOD_NS
    }

    /// Applies a command received from the twin at `now_ns`.
    pub fn on_command(&mut self, frame: &CommandFrame, now_ns: u64) -> Result<(), TeleopError> {
        if frame.robot_id != self.config.robot_id {
            return Ok(());
        }
        match &frame.command {
            Command::ZoneRepulsion {
                direction,
                depth,
                stiffness,
            } => {
                let force = direction.map(|d| d * depth * stiffness);
                self.zone_torque = cartesian_force_to_torque(
                    &self.model,
                    &self.follower.q,
                    &self.config.base,
                    &self.config.ee_link,
                    force,
                )?;
                self.zone_until_ns = now_ns + self.config.command_hold_ns;
            }
        }
        Ok(())
    }

    fn external_at(&self, now_ns: u64) -> Vec<f64> {
        let t = now_ns as f64 * 1e-9;
        let mut ext = if now_ns < self.zone_until_ns {
            self.zone_torque.clone()
        } else {
            vec![0.0; self.follower.q.len()]
        };
        for push in &self.config.pushes {
            if t >= push.start_s && t < push.end_s {
                for (e, p) in ext.iter_mut().zip(&push.torque) {
                    *e += p;
                }
            }
        }
        ext
    }

    /// Runs one 1 ms control tick. Telemetry handed to the twin-bound link
    /// during the tick is returned.
    pub fn step(&mut self) -> Result<(TickRecord, Option<SentTelemetry>), TeleopError> {
        let now_ns = self.now_ns();
        let t = now_ns as f64 * 1e-9;
        let leader = leader_trajectory(t, &self.config.profile)?;

        self.forward.send(now_ns, leader.clone());
        for d in self.forward.poll(now_ns) {
            if self.leader_ref.as_ref().is_none_or(|(sent, _)| d.sent_ns >= *sent) {
                self.leader_ref = Some((d.sent_ns, d.message));
            }
        }
        let reference = match &self.leader_ref {
            Some((_, state)) => state.clone(),
            None => JointState {
                time_ns: now_ns,
                positions: self.follower.q.clone(),
                velocities: vec![0.0; self.follower.q.len()],
                efforts: vec![0.0; self.follower.q.len()],
                gripper_width: leader.gripper_width,
                gripper_velocity: 0.0,
            },
        };

        let external = self.external_at(now_ns);
        let (torque, mut next) = pd_step(
            &reference,
            &self.follower,
            &self.config.gains,
            &external,
            1.0 / CONTROL_RATE_HZ as f64,
        )?;
        for &i in &self.config.finger_joints {
            next.q[i] = reference.gripper_width / 2.0;
            next.dq[i] = reference.gripper_velocity / 2.0;
        }
        self.follower = next;

        self.feedback.send(now_ns, force_feedback(&external));
        for d in self.feedback.poll(now_ns) {
            if d.sent_ns >= self.leader_bias.0 {
                self.leader_bias = (d.sent_ns, d.message);
            }
        }

        let sample = JointState {
            time_ns: now_ns,
            positions: self.follower.q.clone(),
            velocities: self.follower.dq.clone(),
            efforts: torque.clone(),
            gripper_width: reference.gripper_width,
            gripper_velocity: reference.gripper_velocity,
        };
        let emitted = self.throttle.push(now_ns, sample)?;
        let sent = match emitted {
            // The packet leaves once the sample closing its slot arrives.
            Some(e) => Some(self.send_telemetry(now_ns, e.tick_ns, e.sample)?),
            None => None,
        };

        self.tick += 1;
        Ok((
            TickRecord {
                time_ns: now_ns,
                leader,
                follower: self.follower.clone(),
                torque,
                external,
                leader_bias: self.leader_bias.1.clone(),
            },
            sent,
        ))
    }

    /// Releases a throttle tick still pending at the end of a run.
    pub fn flush(&mut self, end_ns: u64) -> Result<Option<SentTelemetry>, TeleopError> {
        let Some(last) = end_ns.checked_sub(1) else {
            return Ok(None);
        };
        match self.throttle.flush(last) {
            Some(e) => Ok(Some(self.send_telemetry(last, e.tick_ns, e.sample)?)),
            None => Ok(None),
        }
    }

    fn send_telemetry(&mut self, send_ns: u64, tick_ns: u64, s: JointState) -> Result<SentTelemetry, TeleopError> {
        let packet = TelemetryPacket {
            robot_id: self.config.robot_id,
            seq: self.seq,
            time_ns: s.time_ns,
            positions: s.positions,
            velocities: s.velocities,
            efforts: s.efforts,
            gripper_width: s.gripper_width,
            gripper_velocity: s.gripper_velocity,
        };
        let bytes = encode_telemetry(&packet)?;
        self.telemetry.send(send_ns, bytes.clone());
        let sent = SentTelemetry {
            seq: self.seq,
            tick_ns,
            send_ns,
            bytes,
        };
        self.seq = self.seq.wrapping_add(1);
        Ok(sent)
    }

    /// Telemetry datagrams that reached the twin by `now_ns`.
    pub fn poll_telemetry(&mut self, now_ns: u64) -> Vec<Delivery<Vec<u8>>> {
        self.telemetry.poll(now_ns)
    }

    pub fn telemetry_dropped(&self) -> u64 {
        self.telemetry.dropped()
    }
}

/// Control ticks in a run of `duration_s` seconds.
pub fn tick_count(duration_s: f64) -> Result<u64, TeleopError> {
    if !(duration_s.is_finite() && duration_s >= 0.0) {
        return Err(TeleopError::Duration(duration_s));
    }
    Ok((duration_s * CONTROL_RATE_HZ as f64).round() as u64)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TeleopTrace {
    pub ticks: Vec<TickRecord>,
    pub telemetry_sent: Vec<SentTelemetry>,
    pub telemetry_delivered: Vec<Delivery<Vec<u8>>>,
}

impl TeleopTrace {
    /// SHA-256 over every tick and packet, as a hex string.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        let put = |h: &mut Sha256, v: &[f64]| {
            for x in v {
                h.update(x.to_le_bytes());
            }
        };
        for t in &self.ticks {
            h.update(t.time_ns.to_le_bytes());
            put(&mut h, &t.leader.positions);
            put(&mut h, &t.leader.velocities);
            put(&mut h, &[t.leader.gripper_width, t.leader.gripper_velocity]);
            put(&mut h, &t.follower.q);
            put(&mut h, &t.follower.dq);
            put(&mut h, &t.torque);
            put(&mut h, &t.external);
            put(&mut h, &t.leader_bias);
        }
        for s in &self.telemetry_sent {
            h.update(s.send_ns.to_le_bytes());
            h.update(&s.bytes);
        }
        for d in &self.telemetry_delivered {
            h.update(d.deliver_ns.to_le_bytes());
            h.update(&d.message);
        }
        hex::encode(h.finalize())
    }
}

/// Runs a standalone teleoperation session of `duration_s` seconds.
pub fn run_teleop(model: RobotModel, config: TeleopConfig, duration_s: f64) -> Result<TeleopTrace, TeleopError> {
    let ticks = tick_count(duration_s)?;
    let mut sim = TeleopSim::new(model, config)?;
    let mut trace = TeleopTrace::default();
    for _ in 0..ticks {
        let (record, sent) = sim.step()?;
        let now = record.time_ns;
        trace.ticks.push(record);
        trace.telemetry_sent.extend(sent);
        trace.telemetry_delivered.extend(sim.poll_telemetry(now));
    }
    let end_ns = ticks * CONTROL_PERIOD_NS;
    trace.telemetry_sent.extend(sim.flush(end_ns)?);
    if let Some(last) = end_ns.checked_sub(1) {
        trace.telemetry_delivered.extend(sim.poll_telemetry(last));
    }
    Ok(trace)
}
