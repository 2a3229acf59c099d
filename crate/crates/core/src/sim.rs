//! Emulated runs: teleop at 1 kHz, links, synthetic mocap, and the twin
//! merge loop, all on simulated time. Also the log replay driver.
//!
//! Event order within one control tick `t`:
//! commands due at `t` reach the follower, the follower steps (and may
//! send telemetry), the tracker emits frames due at `t`, then every
//! delivery up to `t` is fed to the twin in `(deliver_ns, channel)` order,
//! running merge ticks strictly before each delivery first. Merge ticks at
//! or before `t` close the round. Replay feeds the log in file order with
//! the same "ticks before the record, then the record" rule, which is what
//! makes the final states agree.

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::latency::{export_stats, LatencyError, LatencyProbe, LatencyStats, Stage};
use crate::pose::Pose;
use crate::replay::{
    content_bytes, replay, Channel, Clock, LogHeader, LogWriter, ReplayError, ReplayLog, ReplayOptions, ReplaySummary,
    VERSION,
};
use crate::scenario::{AssetScenario, ScenarioConfig, ScenarioError};
use crate::teleop::{TeleopError, TeleopSim, CONTROL_PERIOD_NS};
use crate::transport::{
    encode_command, encode_mocap, CodecError, CommandFrame, DatagramLink, LinkError, MocapPacket, StreamLink,
    TrackingQuality,
};
use crate::twin::{derive_seed, streams, TwinCounters, TwinEngine, TwinError, TwinState};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Teleop(#[from] TeleopError),
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("trace: {0}")]
    Trace(#[from] csv::Error),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One CSV row per merge tick.
#[derive(Debug)]
pub struct TraceTable {
    writer: csv::Writer<Vec<u8>>,
    ee_link: String,
    rows: u64,
}

impl TraceTable {
    pub fn new(ee_link: &str, asset_ids: &[u8]) -> Result<Self, SimError> {
        let mut header: Vec<String> = [
            "tick",
            "time_ns",
            "applied_seq",
            "ee_x",
            "ee_y",
            "ee_z",
            "grasp_phase",
            "zone_id",
            "depth",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for id in asset_ids {
            for col in ["x", "y", "z", "source"] {
                header.push(format!("asset{id}_{col}"));
            }
        }
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&header)?;
        Ok(Self {
            writer,
            ee_link: ee_link.to_string(),
            rows: 0,
        })
    }

    pub fn row(&mut self, s: &TwinState) -> Result<(), SimError> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let mut rec = vec![
            (s.ticks - 1).to_string(),
            s.time_ns.to_string(),
            opt(s.applied_seq.map(|q| q.to_string())),
        ];
        let ee = s.link_poses.get(&self.ee_link).map(|p| p.translation);
        for i in 0..3 {
            rec.push(opt(ee.map(|p| p[i].to_string())));
        }
        rec.push(s.grasp_phase.as_u8().to_string());
        rec.push(opt(s.repulsion.map(|h| h.zone_id.to_string())));
        rec.push(opt(s.repulsion.map(|h| h.repulsion.depth.to_string())));
        for a in &s.assets {
            for i in 0..3 {
                rec.push(a.pose.translation[i].to_string());
            }
            rec.push(a.source.as_u8().to_string());
        }
        self.writer.write_record(&rec)?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn finish(self) -> Result<Vec<u8>, SimError> {
        self.writer
            .into_inner()
            .map_err(|e| SimError::Trace(csv::Error::from(e.into_error())))
    }
}

/// Runs merge ticks strictly before `before_ns`, recording one trace row
/// per tick and handing emitted commands to `on_command`.
fn advance<F>(twin: &mut TwinEngine, trace: &mut TraceTable, before_ns: u64, mut on_command: F) -> Result<(), SimError>
where
    F: FnMut(&mut TwinEngine, CommandFrame) -> Result<(), SimError>,
{
    while twin.next_tick_ns().is_some_and(|t| t < before_ns) {
        let command = twin.tick_once()?;
        trace.row(twin.state())?;
        if let Some(c) = command {
            on_command(twin, c)?;
        }
    }
    Ok(())
}

enum Truth {
    Station(Pose),
    Asset(AssetScenario),
}

/// Noisy marker tracker producing frames on a fixed grid.
pub struct SyntheticTracker {
    objects: Vec<(u8, Truth, u32)>,
    rate_hz: u64,
    next_frame: u64,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
}

impl SyntheticTracker {
    pub fn new(config: &ScenarioConfig) -> Self {
        let mut objects: Vec<(u8, Truth, u32)> = config
            .assets
            .iter()
            .map(|a| (a.id, Truth::Asset(a.clone()), 0))
            .collect();
        if let Some(id) = config.station_object {
            objects.push((id, Truth::Station(config.base_pose()), 0));
        }
        Self {
            objects,
            rate_hz: config.mocap_rate_hz as u64,
            next_frame: 0,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, streams::TRACKER_NOISE)),
            noise: Normal::new(0.0, config.tracker_noise_m).expect("validated noise"),
        }
    }

    fn frame_time(&self, k: u64) -> u64 {
        k * 1_000_000_000 / self.rate_hz
    }

    /// Every frame captured at or before `now_ns` not yet emitted.
    pub fn frames_due(&mut self, now_ns: u64) -> Vec<MocapPacket> {
        let mut out = Vec::new();
        if self.objects.is_empty() {
            return out;
        }
        while self.frame_time(self.next_frame) <= now_ns {
            let time_ns = self.frame_time(self.next_frame);
            let t = time_ns as f64 * 1e-9;
            for (id, truth, seq) in &mut self.objects {
                let (pose, lost) = match truth {
                    Truth::Station(p) => (*p, false),
                    Truth::Asset(a) => (a.truth_at(t), a.occluded_at(t)),
                };
                let mut position: [f64; 3] = pose.translation.into();
                for v in &mut position {
                    *v += self.noise.sample(&mut self.rng);
                }
                out.push(MocapPacket {
                    object_id: *id,
                    seq: *seq,
                    time_ns,
                    position,
                    quaternion: pose.wxyz(),
                    quality: if lost {
                        TrackingQuality::Lost
                    } else {
                        TrackingQuality::Tracked
                    },
                });
                *seq = seq.wrapping_add(1);
            }
            self.next_frame += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrafficCounts {
    pub control_ticks: u64,
    pub telemetry_sent: u64,
    pub telemetry_dropped: u64,
    pub mocap_sent: u64,
    pub mocap_dropped: u64,
    pub commands_sent: u64,
    pub records_logged: u64,
}

#[derive(Debug)]
pub struct RunReport {
    pub state: TwinState,
    pub counters: TwinCounters,
    pub traffic: TrafficCounts,
    /// `None` when no telemetry completed all three stages.
    pub stats: Option<LatencyStats>,
    /// Per-packet stage stamps behind `stats`.
    pub probe: LatencyProbe,
    pub trace_csv: Vec<u8>,
    pub log: Vec<u8>,
    pub seed: u64,
}

impl RunReport {
    pub fn state_hash(&self) -> String {
        self.state.hash()
    }

    pub fn trace_hash(&self) -> String {
        sha256_hex(&self.trace_csv)
    }

    /// Hash of the log with its wall-clock field zeroed.
    pub fn log_hash(&self) -> String {
        sha256_hex(&content_bytes(&self.log))
    }

    pub fn summary(&self) -> String {
        let c = &self.counters;
        let t = &self.traffic;
        format!(
            "seed {}  merge ticks {}  control ticks {}\n\
             telemetry sent {} dropped {} received {} applied {}\n\
             mocap sent {} dropped {} received {}\n\
             commands {}\n\
             records logged {}\n\
             state {}\ntrace {}\nlog   {}",
            self.seed,
            self.state.ticks,
            t.control_ticks,
            t.telemetry_sent,
            t.telemetry_dropped,
            c.telemetry_received,
            c.telemetry_applied,
            t.mocap_sent,
            t.mocap_dropped,
            c.mocap_received,
            t.commands_sent,
            t.records_logged,
            self.state_hash(),
            self.trace_hash(),
            self.log_hash(),
        )
    }
}

fn wall_clock_ns() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_nanos() as u64)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Inbound {
    Telemetry = 1,
    Mocap = 2,
}

struct Run {
    teleop: TeleopSim,
    twin: TwinEngine,
    trace: TraceTable,
    tracker: SyntheticTracker,
    mocap_link: DatagramLink<Vec<u8>>,
    command_link: StreamLink<CommandFrame>,
    log: LogWriter<Vec<u8>>,
    traffic: TrafficCounts,
}

impl Run {
    fn stamp_ingress(&mut self, seq: u32, send_ns: u64) -> Result<(), SimError> {
        self.twin.probe_mut().record(seq, Stage::Ingress, send_ns)?;
        self.traffic.telemetry_sent += 1;
        Ok(())
    }

    /// Merge ticks before `before_ns`; their commands are logged, counted
    /// by the twin and sent toward the follower.
    fn advance(&mut self, before_ns: u64) -> Result<(), SimError> {
        let Run {
            twin,
            trace,
            command_link,
            log,
            traffic,
            ..
        } = self;
        advance(twin, trace, before_ns, |twin, c| {
            let bytes = encode_command(&c);
            log.append(c.time_ns, Channel::Command, &bytes)?;
            twin.on_record(c.time_ns, Channel::Command as u16, &bytes)?;
            command_link.send(c.time_ns, c);
            traffic.commands_sent += 1;
            traffic.records_logged += 1;
            Ok(())
        })
    }

    /// Feeds every delivery due by `now` to the twin, then closes the round.
    fn round(&mut self, now: u64) -> Result<(), SimError> {
        let mut due: Vec<(u64, Inbound, Vec<u8>)> = self
            .teleop
            .poll_telemetry(now)
            .into_iter()
            .map(|d| (d.deliver_ns, Inbound::Telemetry, d.message))
            .collect();
        due.extend(
            self.mocap_link
                .poll(now)
                .into_iter()
                .map(|d| (d.deliver_ns, Inbound::Mocap, d.message)),
        );
        // Stable sort: same-time datagrams on one channel keep link order.
        due.sort_by_key(|(t, ch, _)| (*t, *ch));
        for (t, ch, bytes) in due {
            self.advance(t)?;
            let channel = match ch {
                Inbound::Telemetry => Channel::Telemetry,
                Inbound::Mocap => Channel::Mocap,
            };
            self.log.append(t, channel, &bytes)?;
            self.traffic.records_logged += 1;
            self.twin.on_record(t, channel as u16, &bytes)?;
        }
        self.advance(now.saturating_add(1))
    }

    fn control_tick(&mut self) -> Result<(), SimError> {
        let now = self.teleop.now_ns();
        for d in self.command_link.poll(now) {
            self.teleop.on_command(&d.message, now)?;
        }
        let (_, sent) = self.teleop.step()?;
        if let Some(s) = sent {
            self.stamp_ingress(s.seq, s.send_ns)?;
        }
        for frame in self.tracker.frames_due(now) {
            self.mocap_link.send(now, encode_mocap(&frame)?);
            self.traffic.mocap_sent += 1;
        }
        self.round(now)
    }
}

/// Runs the scenario end to end on simulated time.
pub fn simulate(config: &ScenarioConfig) -> Result<RunReport, SimError> {
    let (model, teleop_config, twin_config) = config.build()?;
    let asset_ids: Vec<u8> = config.assets.iter().map(|a| a.id).collect();
    let header = LogHeader {
        version: VERSION,
        seed: config.seed,
        created_ns: wall_clock_ns(),
    };
    let mut run = Run {
        teleop: TeleopSim::new(model, teleop_config)?,
        twin: TwinEngine::new(twin_config, config.merge_ticks())?,
        trace: TraceTable::new(&config.ee_link, &asset_ids)?,
        tracker: SyntheticTracker::new(config),
        mocap_link: DatagramLink::new(config.link(streams::MOCAP))?,
        command_link: StreamLink::new(config.link(streams::COMMAND))?,
        log: LogWriter::new(Vec::new(), header)?,
        traffic: TrafficCounts::default(),
    };

    for _ in 0..config.control_ticks() {
        run.control_tick()?;
    }
    let end_ns = config.control_ticks() * CONTROL_PERIOD_NS;
    if let Some(s) = run.teleop.flush(end_ns)? {
        run.stamp_ingress(s.seq, s.send_ns)?;
        run.round(s.send_ns)?;
    }
    // Anything still in flight arrives after the run ends.
    run.advance(u64::MAX)?;

    let mut traffic = run.traffic;
    traffic.control_ticks = run.teleop.ticks();
    traffic.telemetry_dropped = run.teleop.telemetry_dropped();
    traffic.mocap_dropped = run.mocap_link.dropped();
    let stats = match run.twin.probe().compute_stats() {
        Ok(s) => Some(s),
        Err(LatencyError::Empty) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(RunReport {
        state: run.twin.state().clone(),
        counters: run.twin.counters(),
        traffic,
        stats,
        probe: run.twin.probe().clone(),
        trace_csv: run.trace.finish()?,
        log: run.log.into_inner(),
        seed: config.seed,
    })
}

/// Runs the scenario and keeps only the latency summary; a run in which
/// no telemetry completed is an error.
pub fn measure_latency(config: &ScenarioConfig) -> Result<LatencyStats, SimError> {
    simulate(config)?.stats.ok_or(SimError::Latency(LatencyError::Empty))
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<PathBuf, SimError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| SimError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(&path, bytes).map_err(|source| SimError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes whichever outputs the scenario names. Returns the paths written.
pub fn write_outputs(config: &ScenarioConfig, report: &RunReport) -> Result<Vec<PathBuf>, SimError> {
    let mut written = Vec::new();
    if let Some(p) = &config.outputs.trace {
        written.push(write_file(config.resolve(p), &report.trace_csv)?);
    }
    if let Some(p) = &config.outputs.log {
        written.push(write_file(config.resolve(p), &report.log)?);
    }
    if let Some(p) = &config.outputs.stats {
        let path = config.resolve(p);
        match &report.stats {
            Some(stats) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|source| SimError::Io {
                        path: dir.to_path_buf(),
                        source,
                    })?;
                }
                export_stats(stats, &path)?;
                written.push(path);
            }
            None => written.push(write_file(path, b"")?),
        }
    }
    Ok(written)
}

#[derive(Debug)]
pub struct ReplayReport {
    pub state: TwinState,
    pub counters: TwinCounters,
    pub summary: ReplaySummary,
    pub trace_csv: Vec<u8>,
}

impl ReplayReport {
    pub fn state_hash(&self) -> String {
        self.state.hash()
    }

    pub fn trace_hash(&self) -> String {
        sha256_hex(&self.trace_csv)
    }
}

/// Rebuilds the twin from a recorded log. The scenario supplies the robot,
/// pipelines and duration; the seed comes from the log header.
pub fn replay_log<C: Clock>(
    config: &ScenarioConfig,
    log: &ReplayLog,
    options: ReplayOptions,
    clock: &mut C,
) -> Result<ReplayReport, SimError> {
    let mut config = config.clone();
    config.seed = log.header.seed;
    let (_, _, twin_config) = config.build()?;
    let mut twin = TwinEngine::new(twin_config, config.merge_ticks())?;
    let asset_ids: Vec<u8> = config.assets.iter().map(|a| a.id).collect();
    let mut trace = TraceTable::new(&config.ee_link, &asset_ids)?;
    // Commands are in the log already; regenerated ones are not re-fed.
    let summary = replay(log, options, clock, |record, _| {
        advance(&mut twin, &mut trace, record.time_ns, |_, _| Ok(())).map_err(|e| e.to_string())?;
        twin.on_log_record(record).map_err(|e| e.to_string())
    })?;
    advance(&mut twin, &mut trace, u64::MAX, |_, _| Ok(()))?;
    Ok(ReplayReport {
        state: twin.state().clone(),
        counters: twin.counters(),
        summary,
        trace_csv: trace.finish()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::SimClock;

    fn short(seconds: f64) -> ScenarioConfig {
        let mut s = ScenarioConfig::builtin_default();
        s.duration_s = seconds;
        s
    }

    #[test]
    fn tick_counts_are_exact() {
        let r = simulate(&short(1.51)).unwrap();
        assert_eq!(r.state.ticks, (1.51f64 * 60.0).round() as u64);
        assert_eq!(r.traffic.control_ticks, 1510);
        let rows = r.trace_csv.iter().filter(|&&b| b == b'\n').count() as u64;
        assert_eq!(rows, r.state.ticks + 1);
    }

    #[test]
    fn zero_duration_is_empty() {
        let r = simulate(&short(0.0)).unwrap();
        assert_eq!(r.state.ticks, 0);
        assert_eq!(r.traffic.records_logged, 0);
        assert!(r.stats.is_none());
        assert!(measure_latency(&short(0.0)).is_err());
    }

    #[test]
    fn same_seed_same_artifacts() {
        let a = simulate(&short(2.0)).unwrap();
        let b = simulate(&short(2.0)).unwrap();
        assert_eq!(a.trace_hash(), b.trace_hash());
        assert_eq!(a.log_hash(), b.log_hash());
        assert_eq!(a.state_hash(), b.state_hash());
        let mut other = short(2.0);
        other.seed += 1;
        assert_ne!(simulate(&other).unwrap().log_hash(), a.log_hash());
    }

    #[test]
    fn replay_matches_run() {
        let config = short(3.0);
        let run = simulate(&config).unwrap();
        let log = ReplayLog::parse(&run.log).unwrap();
        let rep = replay_log(&config, &log, ReplayOptions::default(), &mut SimClock::default()).unwrap();
        assert_eq!(rep.state_hash(), run.state_hash());
        assert_eq!(rep.trace_hash(), run.trace_hash());
        assert_eq!(rep.counters.commands_seen, run.counters.commands_seen);
    }

    #[test]
    fn applied_seq_is_monotone_and_bounded() {
        let r = simulate(&short(3.0)).unwrap();
        let mut rd = csv::Reader::from_reader(r.trace_csv.as_slice());
        let mut last = None;
        for row in rd.records() {
            let row = row.unwrap();
            let seq: Option<u32> = row[2].parse().ok();
            assert!(seq >= last);
            last = seq;
        }
        assert!(last.unwrap() < r.traffic.telemetry_sent as u32);
    }
}
