//! The 60 Hz twin merge loop.
//!
//! Inbound channel traffic enters through [`TwinEngine::on_record`]; merge
//! ticks are run explicitly by the driver. Both the emulated run and log
//! replay drive the engine with the same calls in the same order, so their
//! final states hash identically.

use std::collections::BTreeMap;

use nalgebra::{Unit, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grasp::{
    AssetConfig, AssetInputs, AssetSource, AssetTracker, GraspConfig, GraspError, GraspPhase, GripperFsm,
};
use crate::latency::{LatencyProbe, Stage};
use crate::mocap::{FilterConfig, MocapError, MocapFilter, RawMocapSample};
use crate::pose::Pose;
use crate::replay::{Channel, LogRecord};
use crate::robot_model::{
    apply_joint_state, forward_kinematics_from, gripper_width_to_fingers, LinkPoses, ModelError, RobotModel,
};
use crate::transport::{
    decode_mocap, decode_telemetry, tick_time_ns, CommandFrame, DelayModel, LinkError, TelemetryPacket, TWIN_RATE_HZ,
};
use crate::zones::{deepest, emit_command, update_dynamic, ProhibitedZone, ZoneError, ZoneHit};

#[derive(Debug, Error)]
pub enum TwinError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Zone(#[from] ZoneError),
    #[error(transparent)]
    Grasp(#[from] GraspError),
    #[error(transparent)]
    Mocap(#[from] MocapError),
    #[error("processing delay: {0}")]
    Link(#[from] LinkError),
    #[error("invalid twin config: {0}")]
    Config(String),
    #[error("record at {time_ns} ns arrives after merge tick at {tick_ns} ns already ran")]
    TimeRegression { time_ns: u64, tick_ns: u64 },
}

/// Stream ids used to derive independent RNG seeds from one scenario seed.
pub mod streams {
    pub const PROCESSING: u64 = 1;
    pub const TELEOP: u64 = 2;
    pub const TELEMETRY: u64 = 3;
    pub const MOCAP: u64 = 4;
    pub const COMMAND: u64 = 5;
    pub const TRACKER_NOISE: u64 = 6;
}

/// SplitMix64 finaliser over `seed ⊕ stream`; gives unrelated seeds for
/// nearby inputs.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct TwinConfig {
    pub robot_id: u8,
    pub model: RobotModel,
    pub clamp_limits: bool,
    /// Movable-joint indices mirrored from the gripper width.
    pub finger_joints: Vec<usize>,
    /// Link tested against prohibited zones.
    pub ee_link: String,
    /// Link that carries grasped assets.
    pub gripper_link: String,
    /// Robot base when no station object is tracked.
    pub base: Pose,
    /// Mocap object whose pose is the robot base.
    pub station_object: Option<u8>,
    pub filter: FilterConfig,
    pub grasp: GraspConfig,
    pub assets: Vec<AssetConfig>,
    pub zones: Vec<ProhibitedZone>,
    /// Time from socket read to state application.
    pub processing: DelayModel,
    pub seed: u64,
}

impl TwinConfig {
    pub fn validate(&self) -> Result<Unit<Vector3<f64>>, TwinError> {
        let dof = self.model.movable_count();
        if let Some(&bad) = self.finger_joints.iter().find(|&&i| i >= dof) {
            return Err(TwinError::Config(format!("finger joint index {bad} out of range")));
        }
        for link in [&self.ee_link, &self.gripper_link] {
            if !self.model.has_link(link) {
                return Err(ModelError::UnknownLink(link.clone()).into());
            }
        }
        let up = self.filter.validate()?;
        self.grasp.validate()?;
        self.processing.validate()?;
        let mut ids: Vec<u8> = self.assets.iter().map(|a| a.id).collect();
        ids.extend(self.station_object);
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != n {
            return Err(TwinError::Config("mocap object ids must be unique".into()));
        }
        for z in &self.zones {
            z.validate()?;
            if let Some(asset) = z.attached_asset {
                if !self.assets.iter().any(|a| a.id == asset) {
                    return Err(ZoneError::UnknownAsset { zone: z.id, asset }.into());
                }
            }
        }
        Ok(up)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssetSnapshot {
    pub id: u8,
    pub pose: Pose,
    pub source: AssetSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinState {
    /// Merge ticks completed.
    pub ticks: u64,
    pub time_ns: u64,
    pub applied_seq: Option<u32>,
    pub joint_positions: Vec<f64>,
    /// Empty until the first telemetry is applied.
    pub link_poses: LinkPoses,
    pub station_base: Pose,
    pub grasp_phase: GraspPhase,
    pub assets: Vec<AssetSnapshot>,
    pub repulsion: Option<ZoneHit>,
}

impl TwinState {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.ticks.to_le_bytes());
        out.extend_from_slice(&self.time_ns.to_le_bytes());
        match self.applied_seq {
            Some(s) => {
                out.push(1);
                out.extend_from_slice(&s.to_le_bytes());
            }
            None => out.push(0),
        }
        out.extend_from_slice(&(self.joint_positions.len() as u32).to_le_bytes());
        for q in &self.joint_positions {
            out.extend_from_slice(&q.to_le_bytes());
        }
        out.extend_from_slice(&(self.link_poses.len() as u32).to_le_bytes());
        for (name, pose) in &self.link_poses {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            pose.write_canonical(&mut out);
        }
        self.station_base.write_canonical(&mut out);
        out.push(self.grasp_phase.as_u8());
        for a in &self.assets {
            out.push(a.id);
            out.push(a.source.as_u8());
            a.pose.write_canonical(&mut out);
        }
        match &self.repulsion {
            Some(h) => {
                out.push(1);
                out.extend_from_slice(&h.zone_id.to_le_bytes());
                for v in h.repulsion.direction.iter().chain([&h.repulsion.depth, &h.stiffness]) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            None => out.push(0),
        }
        out
    }

    /// SHA-256 of the canonical encoding, hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_bytes()))
    }

    pub fn asset(&self, id: u8) -> Option<&AssetSnapshot> {
        self.assets.iter().find(|a| a.id == id)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TwinCounters {
    pub telemetry_received: u64,
    pub telemetry_applied: u64,
    pub telemetry_malformed: u64,
    pub telemetry_foreign: u64,
    pub telemetry_duplicate: u64,
    pub mocap_received: u64,
    pub mocap_malformed: u64,
    pub mocap_stale: u64,
    pub mocap_unknown_object: u64,
    pub commands_seen: u64,
    pub commands_emitted: u64,
    pub heartbeats: u64,
    pub unknown_channel: u64,
    pub limit_violations: u64,
}

#[derive(Debug, Clone)]
struct Pending {
    ready_ns: u64,
    packet: TelemetryPacket,
}

#[derive(Debug)]
pub struct TwinEngine {
    config: TwinConfig,
    total_ticks: u64,
    rng: ChaCha8Rng,
    pending: Vec<Pending>,
    latest_delivered_seq: Option<u32>,
    gripper: GripperFsm,
    filters: BTreeMap<u8, MocapFilter>,
    assets: Vec<AssetTracker>,
    state: TwinState,
    probe: LatencyProbe,
    counters: TwinCounters,
    last_record_ns: u64,
}

impl TwinEngine {
    /// `total_ticks` caps how many merge ticks this engine will run.
    pub fn new(config: TwinConfig, total_ticks: u64) -> Result<Self, TwinError> {
        let up = config.validate()?;
        let mut filters = BTreeMap::new();
        for id in config.assets.iter().map(|a| a.id).chain(config.station_object) {
            filters.insert(id, MocapFilter::new(config.filter.clone())?);
        }
        let assets = config
            .assets
            .iter()
            .map(|a| AssetTracker::new(a.clone(), up))
            .collect::<Result<Vec<_>, _>>()?;
        let state = TwinState {
            ticks: 0,
            time_ns: 0,
            applied_seq: None,
            joint_positions: Vec::new(),
            link_poses: LinkPoses::new(),
            station_base: config.base,
            grasp_phase: GraspPhase::Idle,
            assets: assets
                .iter()
                .map(|a| AssetSnapshot {
                    id: a.config().id,
                    pose: *a.pose(),
                    source: a.source(),
                })
                .collect(),
            repulsion: None,
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, streams::PROCESSING)),
            gripper: GripperFsm::new(config.grasp.clone())?,
            filters,
            assets,
            state,
            config,
            total_ticks,
            pending: Vec::new(),
            latest_delivered_seq: None,
            probe: LatencyProbe::new(),
            counters: TwinCounters::default(),
            last_record_ns: 0,
        })
    }

    pub fn state(&self) -> &TwinState {
        &self.state
    }

    pub fn counters(&self) -> TwinCounters {
        self.counters
    }

    pub fn probe(&self) -> &LatencyProbe {
        &self.probe
    }

    pub fn probe_mut(&mut self) -> &mut LatencyProbe {
        &mut self.probe
    }

    pub fn config(&self) -> &TwinConfig {
        &self.config
    }

    pub fn total_ticks(&self) -> u64 {
        self.total_ticks
    }

    pub fn latest_delivered_seq(&self) -> Option<u32> {
        self.latest_delivered_seq
    }

    pub fn mocap_filter(&self, object_id: u8) -> Option<&MocapFilter> {
        self.filters.get(&object_id)
    }

    /// Time of the next merge tick, if any remain.
    pub fn next_tick_ns(&self) -> Option<u64> {
        (self.state.ticks < self.total_ticks).then(|| tick_time_ns(self.state.ticks, TWIN_RATE_HZ))
    }

    /// Ingests one frame read from `channel` at `time_ns`. Malformed or
    /// foreign frames are counted and dropped.
    pub fn on_record(&mut self, time_ns: u64, channel: u16, payload: &[u8]) -> Result<(), TwinError> {
        if let Some(done) = self.state.ticks.checked_sub(1) {
            let tick_ns = tick_time_ns(done, TWIN_RATE_HZ);
            if time_ns < tick_ns {
                return Err(TwinError::TimeRegression { time_ns, tick_ns });
            }
        }
        self.last_record_ns = self.last_record_ns.max(time_ns);
        if payload.is_empty() {
            self.counters.heartbeats += 1;
            return Ok(());
        }
        match Channel::from_u16(channel) {
            Some(Channel::Telemetry) => self.on_telemetry(time_ns, payload),
            Some(Channel::Mocap) => self.on_mocap(payload),
            Some(Channel::Command) => self.counters.commands_seen += 1,
            None => self.counters.unknown_channel += 1,
        }
        Ok(())
    }

    pub fn on_log_record(&mut self, r: &LogRecord) -> Result<(), TwinError> {
        self.on_record(r.time_ns, r.channel, &r.payload)
    }

    fn on_telemetry(&mut self, time_ns: u64, payload: &[u8]) {
        self.counters.telemetry_received += 1;
        let Ok(packet) = decode_telemetry(payload) else {
            self.counters.telemetry_malformed += 1;
            return;
        };
        if packet.robot_id != self.config.robot_id {
            self.counters.telemetry_foreign += 1;
            return;
        }
        let finite = packet
            .positions
            .iter()
            .chain(&packet.velocities)
            .chain(&packet.efforts)
            .chain([&packet.gripper_width, &packet.gripper_velocity])
            .all(|x| x.is_finite());
        if packet.dof() != self.config.model.movable_count() || !finite || packet.gripper_width < 0.0 {
            self.counters.telemetry_malformed += 1;
            return;
        }
        if self.probe.record(packet.seq, Stage::SocketRecv, time_ns).is_err() {
            self.counters.telemetry_duplicate += 1;
            return;
        }
        let ready_ns = time_ns + self.config.processing.sample_ns(&mut self.rng);
        self.probe
            .record(packet.seq, Stage::Applied, ready_ns)
            .expect("fresh seq with SocketRecv just stamped");
        self.latest_delivered_seq = Some(self.latest_delivered_seq.map_or(packet.seq, |s| s.max(packet.seq)));
        self.pending.push(Pending { ready_ns, packet });
    }

    fn on_mocap(&mut self, payload: &[u8]) {
        self.counters.mocap_received += 1;
        let Ok(packet) = decode_mocap(payload) else {
            self.counters.mocap_malformed += 1;
            return;
        };
        let Some(filter) = self.filters.get_mut(&packet.object_id) else {
            self.counters.mocap_unknown_object += 1;
            return;
        };
        match filter.process(&RawMocapSample::from(&packet)) {
            Ok(_) => {}
            Err(MocapError::TimeRegression { .. }) => self.counters.mocap_stale += 1,
            Err(_) => self.counters.mocap_malformed += 1,
        }
    }

    /// Runs the next merge tick. `Ok(None)` when every tick has run or the
    /// tick emitted no command; check [`TwinEngine::next_tick_ns`] first.
    pub fn tick_once(&mut self) -> Result<Option<CommandFrame>, TwinError> {
        match self.next_tick_ns() {
            Some(t) => self.merge_tick(t),
            None => Ok(None),
        }
    }

    /// Runs every remaining merge tick strictly before `time_ns`.
    pub fn run_ticks_before(&mut self, time_ns: u64) -> Result<Vec<CommandFrame>, TwinError> {
        let mut out = Vec::new();
        while self.next_tick_ns().is_some_and(|t| t < time_ns) {
            out.extend(self.tick_once()?);
        }
        Ok(out)
    }

    /// Runs every remaining merge tick at or before `time_ns`.
    pub fn run_ticks_through(&mut self, time_ns: u64) -> Result<Vec<CommandFrame>, TwinError> {
        self.run_ticks_before(time_ns.saturating_add(1))
    }

    /// Runs all remaining ticks.
    pub fn finish(&mut self) -> Result<Vec<CommandFrame>, TwinError> {
        self.run_ticks_before(u64::MAX)
    }

    fn merge_tick(&mut self, now: u64) -> Result<Option<CommandFrame>, TwinError> {
        // Newest ready telemetry wins; older ready packets are superseded.
        let applied = self.state.applied_seq;
        let mut best: Option<usize> = None;
        for (i, p) in self.pending.iter().enumerate() {
            let newer = applied.is_none_or(|s| p.packet.seq > s);
            if p.ready_ns <= now && newer && best.is_none_or(|b| p.packet.seq > self.pending[b].packet.seq) {
                best = Some(i);
            }
        }
        let fresh = best.map(|i| self.pending.swap_remove(i));
        let floor = fresh.as_ref().map(|p| p.packet.seq).or(applied);
        self.pending
            .retain(|p| p.ready_ns > now && floor.is_none_or(|s| p.packet.seq > s));

        if let Some(Pending { packet, .. }) = fresh {
            let model = &self.config.model;
            let mut joints = apply_joint_state(model, &packet.positions, self.config.clamp_limits)?;
            self.counters.limit_violations += joints.violations.len() as u64;
            let (left, right) = gripper_width_to_fingers(packet.gripper_width)?;
            for (k, &i) in self.config.finger_joints.iter().enumerate() {
                joints.positions[i] = if k % 2 == 0 { left } else { right };
            }
            self.gripper.step(packet.gripper_width, packet.gripper_velocity)?;
            self.state.applied_seq = Some(packet.seq);
            self.state.joint_positions = joints.positions;
            self.counters.telemetry_applied += 1;
        }

        if let Some(base) = self
            .config
            .station_object
            .and_then(|id| self.filters[&id].last())
            .map(|f| f.pose())
        {
            self.state.station_base = base;
        }
        if !self.state.joint_positions.is_empty() {
            self.state.link_poses = forward_kinematics_from(
                &self.config.model,
                &self.state.joint_positions,
                &self.state.station_base,
            )?;
        }
        self.state.grasp_phase = self.gripper.phase();

        let gripper_pose = self.state.link_poses.get(&self.config.gripper_link).copied();
        for (tracker, snap) in self.assets.iter_mut().zip(self.state.assets.iter_mut()) {
            let own = tracker.config().gripper_robot == Some(self.config.robot_id);
            let inputs = AssetInputs {
                time_ns: now,
                phase: if own { self.state.grasp_phase } else { GraspPhase::Idle },
                gripper: gripper_pose.as_ref().filter(|_| own),
                mocap: self.filters[&snap.id].last(),
            };
            let (pose, source) = tracker.update(inputs)?;
            snap.pose = pose;
            snap.source = source;
        }

        let boxes = self
            .config
            .zones
            .iter()
            .map(|z| {
                let asset = z.attached_asset.and_then(|id| self.state.asset(id)).map(|a| &a.pose);
                Ok((update_dynamic(z, asset)?, z))
            })
            .collect::<Result<Vec<_>, ZoneError>>()?;
        let ee = self.state.link_poses.get(&self.config.ee_link).map(|p| p.translation);
        self.state.repulsion = ee.and_then(|p| deepest(&boxes, &p));
        let command = self.state.repulsion.map(|hit| {
            self.counters.commands_emitted += 1;
            emit_command(self.config.robot_id, now, &hit.repulsion, hit.stiffness)
        });

        self.state.ticks += 1;
        self.state.time_ns = now;
        Ok(command)
    }
}
