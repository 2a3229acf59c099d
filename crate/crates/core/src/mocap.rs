//! Motion-capture jitter filtering.
//!
//! Each tracked object gets its own [`MocapFilter`]. A frame goes through a
//! quality check, then a velocity gate against the last accepted position.
//! Accepted frames feed a sliding mean window; rejected ones collect in a
//! small buffer that lets the filter jump to a new resting place once enough
//! of them agree.

use std::collections::VecDeque;

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::Pose;
use crate::transport::{MocapPacket, TrackingQuality};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MocapError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("zero quaternion")]
    ZeroQuaternion,
    #[error("quaternion norm {0} is not 1")]
    NonUnitQuaternion(f64),
    #[error("time step must be positive, got {0} s")]
    BadStep(f64),
    #[error("frame at {time_ns} ns precedes previous frame at {last_ns} ns")]
    TimeRegression { time_ns: u64, last_ns: u64 },
    #[error("invalid filter config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub window: usize,
    /// m/s
    pub vmax: f64,
    pub up_axis: [f64; 3],
    pub stable_count: usize,
    /// m
    pub stable_tol: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            window: 9,
            vmax: 2.0,
            up_axis: [0.0, 0.0, 1.0],
            stable_count: 10,
            stable_tol: 0.005,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<Unit<Vector3<f64>>, MocapError> {
        if !(5..=15).contains(&self.window) {
            return Err(MocapError::Config(format!("window {} outside 5..=15", self.window)));
        }
        if !(self.vmax > 0.0 && self.vmax.is_finite()) {
            return Err(MocapError::Config(format!("vmax must be positive, got {}", self.vmax)));
        }
        if self.stable_count < 2 {
            return Err(MocapError::Config("stable_count must be at least 2".into()));
        }
        if !(self.stable_tol > 0.0 && self.stable_tol.is_finite()) {
            return Err(MocapError::Config("stable_tol must be positive".into()));
        }
        let up = Vector3::from(self.up_axis);
        if !up.iter().all(|x| x.is_finite()) || up.norm() < 1e-9 {
            return Err(MocapError::Config("up_axis must be a non-zero vector".into()));
        }
        Ok(Unit::new_normalize(up))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStatus {
    WarmingUp,
    Stable,
    Holding,
    Relocated,
}

impl FilterStatus {
    pub fn as_u8(self) -> u8 {
        match self {
            FilterStatus::WarmingUp => 0,
            FilterStatus::Stable => 1,
            FilterStatus::Holding => 2,
            FilterStatus::Relocated => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilteredPose {
    pub time_ns: u64,
    pub position: Vector3<f64>,
    /// Rotation about the up axis only.
    pub rotation: UnitQuaternion<f64>,
    pub status: FilterStatus,
}

impl FilteredPose {
    pub fn pose(&self) -> Pose {
        Pose::new(self.position, self.rotation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawMocapSample {
    pub time_ns: u64,
    pub position: Vector3<f64>,
    pub rotation: Quaternion<f64>,
    pub quality: TrackingQuality,
}

impl From<&MocapPacket> for RawMocapSample {
    fn from(p: &MocapPacket) -> Self {
        let [w, x, y, z] = p.quaternion;
        Self {
            time_ns: p.time_ns,
            position: Vector3::from(p.position),
            rotation: Quaternion::new(w, x, y, z),
            quality: p.quality,
        }
    }
}

/// Mean of the last `capacity` positions. Until the window fills, it
/// averages whatever it has.
#[derive(Debug, Clone)]
pub struct SlidingMean {
    capacity: usize,
    values: VecDeque<Vector3<f64>>,
}

impl SlidingMean {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            values: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.values.len() == self.capacity
    }

    pub fn push(&mut self, p: Vector3<f64>) -> Result<Vector3<f64>, MocapError> {
        if !p.iter().all(|x| x.is_finite()) {
            return Err(MocapError::NonFinite("position"));
        }
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(p);
        Ok(self.mean())
    }

    /// Replaces the whole window with copies of `p`.
    pub fn fill(&mut self, p: Vector3<f64>) {
        self.values.clear();
        self.values.extend(std::iter::repeat_n(p, self.capacity));
    }

    /// Offsets from the oldest entry keep a constant window exact.
    fn mean(&self) -> Vector3<f64> {
        let first = self.values[0];
        let sum: Vector3<f64> = self.values.iter().map(|v| v - first).sum();
        first + sum / self.values.len() as f64
    }
}

/// One-shot mean over the last `w` entries of `history` (or all of them).
pub fn sliding_mean(history: &[Vector3<f64>], w: usize) -> Result<Vector3<f64>, MocapError> {
    let mut m = SlidingMean::new(w);
    let mut out = Err(MocapError::NonFinite("empty window"));
    for p in history {
        out = m.push(*p);
        out.as_ref().map_err(Clone::clone)?;
    }
    out
}

/// Twist part of the swing–twist split of `q` about `up`: the yaw that
/// remains once tilt is removed.
pub fn constrain_upright(q: &Quaternion<f64>, up: &Unit<Vector3<f64>>) -> Result<UnitQuaternion<f64>, MocapError> {
    if !q.coords.iter().all(|x| x.is_finite()) {
        return Err(MocapError::NonFinite("quaternion"));
    }
    if q.norm() == 0.0 {
        return Err(MocapError::ZeroQuaternion);
    }
    let along = up.dot(&q.imag());
    let twist = Quaternion::from_parts(q.w, up.into_inner() * along);
    if twist.norm() < 1e-12 {
        // Half-turn tilt: no defined heading.
        return Ok(UnitQuaternion::identity());
    }
    Ok(UnitQuaternion::from_quaternion(twist))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    Accept,
    Drop,
}

/// Accepts iff the implied speed is at most `vmax` (boundary inclusive).
pub fn velocity_gate(
    prev_accepted: &Vector3<f64>,
    candidate: &Vector3<f64>,
    dt: f64,
    vmax: f64,
) -> Result<GateDecision, MocapError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(MocapError::BadStep(dt));
    }
    // Compare distances, not speeds, so `|d| == vmax·dt` stays exact.
    if (candidate - prev_accepted).norm() <= vmax * dt {
        Ok(GateDecision::Accept)
    } else {
        Ok(GateDecision::Drop)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Recovery {
    Holding,
    Relocate {
        position: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
    },
}

/// Sliding buffer of gated-out frames.
#[derive(Debug, Clone)]
pub struct DropBuffer {
    capacity: usize,
    tol: f64,
    frames: VecDeque<(Vector3<f64>, UnitQuaternion<f64>)>,
}

impl DropBuffer {
    pub fn new(capacity: usize, tol: f64) -> Self {
        Self {
            capacity,
            tol,
            frames: VecDeque::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    fn consistent(&self) -> bool {
        let f = &self.frames;
        (0..f.len()).all(|i| (i + 1..f.len()).all(|j| (f[i].0 - f[j].0).norm() <= self.tol))
    }
}

/// Adds a dropped frame; relocates once the buffer holds `capacity`
/// mutually consistent frames.
pub fn stability_recovery(buffer: &mut DropBuffer, position: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Recovery {
    if buffer.frames.len() == buffer.capacity {
        buffer.frames.pop_front();
    }
    buffer.frames.push_back((position, rotation));
    if buffer.frames.len() < buffer.capacity || !buffer.consistent() {
        return Recovery::Holding;
    }
    let n = buffer.frames.len() as f64;
    let first = buffer.frames[0].0;
    let offset: Vector3<f64> = buffer.frames.iter().map(|(p, _)| p - first).sum();
    let rotation = mean_rotation(buffer.frames.iter().map(|(_, q)| *q));
    buffer.clear();
    Recovery::Relocate {
        position: first + offset / n,
        rotation,
    }
}

/// Sign-aligned, renormalised mean of nearby unit quaternions.
fn mean_rotation(qs: impl Iterator<Item = UnitQuaternion<f64>>) -> UnitQuaternion<f64> {
    let mut reference: Option<Quaternion<f64>> = None;
    let mut sum = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    for q in qs {
        let q = q.into_inner();
        let r = *reference.get_or_insert(q);
        sum += if q.dot(&r) < 0.0 { -q } else { q };
    }
    if sum.norm() < 1e-12 {
        return UnitQuaternion::from_quaternion(reference.unwrap_or_else(Quaternion::identity));
    }
    UnitQuaternion::from_quaternion(sum)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterCounters {
    pub accepted: u64,
    pub gated: u64,
    pub lost: u64,
    pub duplicates: u64,
    pub relocations: u64,
}

/// Per-object filter state.
#[derive(Debug, Clone)]
pub struct MocapFilter {
    config: FilterConfig,
    up: Unit<Vector3<f64>>,
    positions: SlidingMean,
    rotations: VecDeque<UnitQuaternion<f64>>,
    drops: DropBuffer,
    prev_accepted: Option<(u64, Vector3<f64>)>,
    last_time: Option<u64>,
    last: Option<FilteredPose>,
    counters: FilterCounters,
}

impl MocapFilter {
    pub fn new(config: FilterConfig) -> Result<Self, MocapError> {
        let up = config.validate()?;
        Ok(Self {
            positions: SlidingMean::new(config.window),
            rotations: VecDeque::with_capacity(config.window),
            drops: DropBuffer::new(config.stable_count, config.stable_tol),
            up,
            config,
            prev_accepted: None,
            last_time: None,
            last: None,
            counters: FilterCounters::default(),
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn last(&self) -> Option<&FilteredPose> {
        self.last.as_ref()
    }

    pub fn counters(&self) -> FilterCounters {
        self.counters
    }

    /// Runs one frame through the pipeline. Returns `None` until the first
    /// accepted frame and for same-timestamp duplicates.
    pub fn process(&mut self, raw: &RawMocapSample) -> Result<Option<FilteredPose>, MocapError> {
        if let Some(last_ns) = self.last_time {
            if raw.time_ns < last_ns {
                return Err(MocapError::TimeRegression {
                    time_ns: raw.time_ns,
                    last_ns,
                });
            }
            if raw.time_ns == last_ns {
                self.counters.duplicates += 1;
                return Ok(None);
            }
        }
        self.last_time = Some(raw.time_ns);

        if raw.quality == TrackingQuality::Lost {
            self.counters.lost += 1;
            return Ok(self.hold(raw.time_ns));
        }
        if !raw.position.iter().all(|x| x.is_finite()) {
            return Err(MocapError::NonFinite("position"));
        }
        let norm = raw.rotation.norm();
        if (norm - 1.0).abs() > 1e-6 || !norm.is_finite() {
            return Err(MocapError::NonUnitQuaternion(norm));
        }
        let yaw = constrain_upright(&raw.rotation, &self.up)?;

        let decision = match self.prev_accepted {
            None => GateDecision::Accept,
            Some((t0, p0)) => {
                let dt = (raw.time_ns - t0) as f64 * 1e-9;
                velocity_gate(&p0, &raw.position, dt, self.config.vmax)?
            }
        };

        let out = match decision {
            GateDecision::Accept => {
                self.counters.accepted += 1;
                self.drops.clear();
                self.prev_accepted = Some((raw.time_ns, raw.position));
                let position = self.positions.push(raw.position)?;
                if self.rotations.len() == self.config.window {
                    self.rotations.pop_front();
                }
                self.rotations.push_back(yaw);
                let status = if self.positions.is_full() {
                    FilterStatus::Stable
                } else {
                    FilterStatus::WarmingUp
                };
                FilteredPose {
                    time_ns: raw.time_ns,
                    position,
                    rotation: mean_rotation(self.rotations.iter().copied()),
                    status,
                }
            }
            GateDecision::Drop => {
                self.counters.gated += 1;
                match stability_recovery(&mut self.drops, raw.position, yaw) {
                    Recovery::Holding => return Ok(self.hold(raw.time_ns)),
                    Recovery::Relocate { position, rotation } => {
                        self.counters.relocations += 1;
                        self.positions.fill(position);
                        self.rotations.clear();
                        self.rotations.extend(std::iter::repeat_n(rotation, self.config.window));
                        self.prev_accepted = Some((raw.time_ns, position));
                        FilteredPose {
                            time_ns: raw.time_ns,
                            position,
                            rotation,
                            status: FilterStatus::Relocated,
                        }
                    }
                }
            }
        };
        self.last = Some(out);
        Ok(Some(out))
    }

    fn hold(&mut self, time_ns: u64) -> Option<FilteredPose> {
        let held = self.last.map(|p| FilteredPose {
            time_ns,
            status: FilterStatus::Holding,
            ..p
        })?;
        self.last = Some(held);
        Some(held)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;
    use proptest::prelude::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    fn z_up() -> Unit<Vector3<f64>> {
        Vector3::z_axis()
    }

    fn tracked(time_ns: u64, p: Vector3<f64>) -> RawMocapSample {
        RawMocapSample {
            time_ns,
            position: p,
            rotation: Quaternion::identity(),
            quality: TrackingQuality::Tracked,
        }
    }

    #[test]
    fn constant_input_is_exact() {
        let p = v(0.1, 0.7, -0.3);
        assert_eq!(sliding_mean(&[p; 20], 9).unwrap(), p);
        assert_eq!(sliding_mean(&[p], 9).unwrap(), p);
    }

    #[test]
    fn ramp_lags_by_half_window() {
        let d = 0.01;
        let ramp: Vec<_> = (0..40).map(|k| v(k as f64 * d, 0.0, 0.0)).collect();
        let mut m = SlidingMean::new(5);
        for (k, p) in ramp.iter().enumerate() {
            let out = m.push(*p).unwrap();
            if k >= 4 {
                assert!((p.x - out.x - 2.0 * d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sliding_mean_rejects_non_finite() {
        assert!(SlidingMean::new(5).push(v(f64::NAN, 0.0, 0.0)).is_err());
    }

    #[test]
    fn upright_keeps_pure_yaw_and_drops_pure_tilt() {
        let yaw = UnitQuaternion::from_axis_angle(&z_up(), 30f64.to_radians());
        let out = constrain_upright(yaw.quaternion(), &z_up()).unwrap();
        assert!(out.angle_to(&yaw) < 1e-12);
        let tilt = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 10f64.to_radians());
        let out = constrain_upright(tilt.quaternion(), &z_up()).unwrap();
        assert!(out.angle() < 1e-12);
        assert!(constrain_upright(&Quaternion::new(0.0, 0.0, 0.0, 0.0), &z_up()).is_err());
    }

    /// Heading of the rotated x axis, read from the rotation matrix.
    fn heading(m: &Matrix3<f64>) -> f64 {
        m[(1, 0)].atan2(m[(0, 0)])
    }

    #[test]
    fn yaw_then_pitch_keeps_yaw() {
        let yaw = UnitQuaternion::from_axis_angle(&z_up(), 30f64.to_radians());
        let pitch = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 10f64.to_radians());
        let q = yaw * pitch;
        let out = constrain_upright(q.quaternion(), &z_up()).unwrap();
        let expected = heading(q.to_rotation_matrix().matrix());
        assert!((expected - 30f64.to_radians()).abs() < 1e-12);
        assert!((out.angle() - expected).abs() < 1e-9);
        assert!(out.axis().unwrap().z > 0.0);
    }

    proptest! {
        #[test]
        fn upright_output_is_yaw_only(
            w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
            ux in -1.0f64..1.0, uy in -1.0f64..1.0, uz in -1.0f64..1.0,
        ) {
            let q = Quaternion::new(w, x, y, z);
            prop_assume!(q.norm() > 1e-3);
            let up = Vector3::new(ux, uy, uz);
            prop_assume!(up.norm() > 1e-3);
            let up = Unit::new_normalize(up);
            let out = constrain_upright(&(q / q.norm()), &up).unwrap();
            let imag = out.quaternion().imag();
            prop_assert!((imag - up.into_inner() * up.dot(&imag)).norm() < 1e-9);
            prop_assert!((out.quaternion().norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn output_stays_in_hull_of_accepted(
            xs in proptest::collection::vec(-1.0f64..1.0, 1..60),
        ) {
            let mut f = MocapFilter::new(FilterConfig { vmax: 1e6, ..Default::default() }).unwrap();
            let (lo, hi) = xs.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
            for (k, &x) in xs.iter().enumerate() {
                let out = f.process(&tracked(k as u64 * 10_000_000 + 1, v(x, 0.0, 0.0))).unwrap().unwrap();
                prop_assert!(out.position.x >= lo - 1e-12 && out.position.x <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn velocity_gate_cases() {
        let o = Vector3::zeros();
        assert_eq!(velocity_gate(&o, &o, 0.01, 0.5).unwrap(), GateDecision::Accept);
        assert_eq!(
            velocity_gate(&o, &v(1.0, 0.0, 0.0), 0.01, 0.5).unwrap(),
            GateDecision::Drop
        );
        assert_eq!(
            velocity_gate(&o, &v(0.5 * 0.25, 0.0, 0.0), 0.25, 0.5).unwrap(),
            GateDecision::Accept
        );
        assert!(velocity_gate(&o, &o, 0.0, 0.5).is_err());
    }

    #[test]
    fn alternating_drops_never_relocate() {
        let mut buf = DropBuffer::new(10, 0.005);
        for k in 0..100 {
            let p = if k % 2 == 0 {
                v(1.0, 0.0, 0.0)
            } else {
                v(-1.0, 0.0, 0.0)
            };
            assert_eq!(
                stability_recovery(&mut buf, p, UnitQuaternion::identity()),
                Recovery::Holding
            );
        }
    }

    #[test]
    fn single_outlier_ages_out() {
        let mut f = MocapFilter::new(FilterConfig::default()).unwrap();
        let dt = 10_000_000;
        for k in 0..20 {
            f.process(&tracked(k * dt, Vector3::zeros())).unwrap();
        }
        let out = f.process(&tracked(20 * dt, v(5.0, 0.0, 0.0))).unwrap().unwrap();
        assert_eq!(out.status, FilterStatus::Holding);
        for k in 21..60 {
            let out = f.process(&tracked(k * dt, Vector3::zeros())).unwrap().unwrap();
            assert_eq!(out.status, FilterStatus::Stable);
            assert_eq!(out.position, Vector3::zeros());
        }
        assert_eq!(f.counters().relocations, 0);
    }

    #[test]
    fn occlusion_then_move_relocates_on_tenth_frame() {
        let mut f = MocapFilter::new(FilterConfig::default()).unwrap();
        let dt = 10_000_000;
        let mut t = 0;
        for _ in 0..9 {
            f.process(&tracked(t, Vector3::zeros())).unwrap();
            t += dt;
        }
        assert_eq!(f.last().unwrap().status, FilterStatus::Stable);
        for _ in 0..5 {
            let lost = RawMocapSample {
                quality: TrackingQuality::Lost,
                ..tracked(t, Vector3::zeros())
            };
            let out = f.process(&lost).unwrap().unwrap();
            assert_eq!(out.status, FilterStatus::Holding);
            assert_eq!(out.position, Vector3::zeros());
            t += dt;
        }
        // Object reappears 1 m away, jittering by under 1 mm.
        let target = v(1.0, 0.0, 0.0);
        let jitter = |k: u64| v(((k % 3) as f64 - 1.0) * 4e-4, 0.0, 0.0);
        let mut seen = Vec::new();
        for k in 0..10 {
            let p = target + jitter(k);
            seen.push(p);
            let out = f.process(&tracked(t, p)).unwrap().unwrap();
            t += dt;
            if k < 9 {
                assert_eq!(out.status, FilterStatus::Holding, "frame {k}");
            } else {
                assert_eq!(out.status, FilterStatus::Relocated);
                let mean = seen.iter().sum::<Vector3<f64>>() / 10.0;
                assert!((out.position - mean).norm() < 1e-12);
            }
        }
        let out = f.process(&tracked(t, target)).unwrap().unwrap();
        assert_eq!(out.status, FilterStatus::Stable);
    }

    #[test]
    fn step_reaches_target_in_window_samples() {
        let cfg = FilterConfig {
            vmax: 1e3,
            ..Default::default()
        };
        let w = cfg.window;
        let mut f = MocapFilter::new(cfg).unwrap();
        let dt = 10_000_000;
        for k in 0..20 {
            f.process(&tracked(k * dt, Vector3::zeros())).unwrap();
        }
        let target = v(0.3, -0.2, 0.1);
        for k in 0..w as u64 {
            let out = f.process(&tracked((20 + k) * dt, target)).unwrap().unwrap();
            if (k as usize) < w - 1 {
                assert_ne!(out.position, target);
            } else {
                assert_eq!(out.position, target);
            }
        }
    }

    #[test]
    fn time_rules() {
        let mut f = MocapFilter::new(FilterConfig::default()).unwrap();
        assert!(f.process(&tracked(100, Vector3::zeros())).unwrap().is_some());
        assert!(f.process(&tracked(100, Vector3::zeros())).unwrap().is_none());
        assert_eq!(f.counters().duplicates, 1);
        assert!(matches!(
            f.process(&tracked(50, Vector3::zeros())),
            Err(MocapError::TimeRegression { .. })
        ));
    }

    #[test]
    fn config_bounds() {
        for bad in [
            FilterConfig {
                window: 4,
                ..Default::default()
            },
            FilterConfig {
                window: 16,
                ..Default::default()
            },
            FilterConfig {
                vmax: 0.0,
                ..Default::default()
            },
            FilterConfig {
                stable_count: 1,
                ..Default::default()
            },
            FilterConfig {
                stable_tol: 0.0,
                ..Default::default()
            },
            FilterConfig {
                up_axis: [0.0; 3],
                ..Default::default()
            },
        ] {
            assert!(MocapFilter::new(bad).is_err());
        }
    }

    #[derive(Clone, Copy, PartialEq, Debug)]
    enum Sym {
        A,
        B,
        Lost,
    }

    /// Reference automaton for a two-point world where the points are too
    /// far apart for the gate to ever pass a jump between them.
    struct Oracle {
        k: usize,
        w: usize,
        anchor: Option<Sym>,
        run: usize,
        filled: usize,
        has_pose: bool,
    }

    impl Oracle {
        fn step(&mut self, s: Sym) -> Option<FilterStatus> {
            match (s, self.anchor) {
                (Sym::Lost, _) => self.has_pose.then_some(FilterStatus::Holding),
                (s, None) => {
                    self.anchor = Some(s);
                    self.filled = 1;
                    self.has_pose = true;
                    Some(FilterStatus::WarmingUp)
                }
                (s, Some(a)) if s == a => {
                    self.run = 0;
                    self.filled = (self.filled + 1).min(self.w);
                    Some(if self.filled == self.w {
                        FilterStatus::Stable
                    } else {
                        FilterStatus::WarmingUp
                    })
                }
                (s, Some(_)) => {
                    self.run += 1;
                    if self.run == self.k {
                        self.anchor = Some(s);
                        self.run = 0;
                        self.filled = self.w;
                        Some(FilterStatus::Relocated)
                    } else {
                        Some(FilterStatus::Holding)
                    }
                }
            }
        }
    }

    #[test]
    fn relocation_matches_oracle_exhaustively() {
        let syms = [Sym::A, Sym::B, Sym::Lost];
        let point = |s: Sym| match s {
            Sym::B => v(100.0, 0.0, 0.0),
            _ => Vector3::zeros(),
        };
        for k in [2usize, 3, 10] {
            let cfg = FilterConfig {
                stable_count: k,
                window: 5,
                ..Default::default()
            };
            for len in 1..=12u32 {
                for code in 0..3usize.pow(len) {
                    let mut f = MocapFilter::new(cfg.clone()).unwrap();
                    let mut oracle = Oracle {
                        k,
                        w: 5,
                        anchor: None,
                        run: 0,
                        filled: 0,
                        has_pose: false,
                    };
                    let mut c = code;
                    for i in 0..len as u64 {
                        let s = syms[c % 3];
                        c /= 3;
                        let raw = RawMocapSample {
                            quality: if s == Sym::Lost {
                                TrackingQuality::Lost
                            } else {
                                TrackingQuality::Tracked
                            },
                            ..tracked(i * 10_000_000, point(s))
                        };
                        let got = f.process(&raw).unwrap();
                        let want = oracle.step(s);
                        assert_eq!(got.map(|p| p.status), want, "k={k} len={len} code={code} i={i}");
                        if let (Some(p), Some(a)) = (got, oracle.anchor) {
                            assert_eq!(p.position, point(a));
                        }
                    }
                }
            }
        }
    }
}
