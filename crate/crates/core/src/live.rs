//! Live mode: the same codecs and twin engine over real sockets, on the
//! wall clock.
//!
//! One thread per UDP channel reads datagrams, stamps them and hands them to
//! the merge loop over a channel. The merge loop is the only owner of the
//! twin. Commands go out over a TCP stream to whichever follower is
//! connected; losing that peer marks the command channel down and nothing
//! else.

use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::latency::{LatencyError, LatencyStats};
use crate::replay::{Channel, LogHeader, LogWriter, ReplayError, VERSION};
use crate::transport::{encode_command, encode_telemetry, TelemetryPacket, TWIN_RATE_HZ};
use crate::twin::{TwinConfig, TwinCounters, TwinEngine, TwinError, TwinState};

/// Largest datagram read; bigger ones are truncated and fail to decode.
const MAX_DATAGRAM: usize = 65_507;
const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Error)]
pub enum LiveError {
    #[error("binding {what} on {addr}: {source}")]
    Bind {
        what: &'static str,
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error(transparent)]
    Log(#[from] ReplayError),
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error("socket: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct LiveOptions {
    pub telemetry: SocketAddr,
    pub mocap: SocketAddr,
    /// TCP listen address for the follower's command connection.
    pub command: SocketAddr,
    /// Stop after this long; `None` runs until stopped.
    pub duration: Option<Duration>,
    /// Record every inbound frame and outbound command.
    pub log: Option<PathBuf>,
}

impl LiveOptions {
    /// Ephemeral loopback ports for all three channels.
    pub fn loopback() -> Self {
        let any: SocketAddr = "127.0.0.1:0".parse().expect("literal address");
        Self {
            telemetry: any,
            mocap: any,
            command: any,
            duration: None,
            log: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiveAddrs {
    pub telemetry: SocketAddr,
    pub mocap: SocketAddr,
    pub command: SocketAddr,
}

/// Shared view of the command stream.
#[derive(Debug, Default)]
pub struct CommandChannel {
    peer: Mutex<Option<(u64, TcpStream)>>,
    generation: AtomicU64,
    up: AtomicBool,
    connects: AtomicU64,
    disconnects: AtomicU64,
}

impl CommandChannel {
    pub fn is_up(&self) -> bool {
        self.up.load(Ordering::SeqCst)
    }

    pub fn connects(&self) -> u64 {
        self.connects.load(Ordering::SeqCst)
    }

    pub fn disconnects(&self) -> u64 {
        self.disconnects.load(Ordering::SeqCst)
    }

    fn attach(&self, stream: TcpStream) -> u64 {
        let id = self.generation.fetch_add(1, Ordering::SeqCst) + 1;
        *self.peer.lock().expect("command peer lock") = Some((id, stream));
        self.up.store(true, Ordering::SeqCst);
        self.connects.fetch_add(1, Ordering::SeqCst);
        id
    }

    /// Drops peer `id` if it is still the current one.
    fn mark_down(&self, id: u64) {
        let mut peer = self.peer.lock().expect("command peer lock");
        if peer.as_ref().is_some_and(|(cur, _)| *cur == id) {
            *peer = None;
            self.up.store(false, Ordering::SeqCst);
            self.disconnects.fetch_add(1, Ordering::SeqCst);
            log::warn!("command peer disconnected; command channel down");
        }
    }

    /// Returns false when no peer is attached or the write failed.
    fn send(&self, bytes: &[u8]) -> bool {
        let failed = {
            let mut peer = self.peer.lock().expect("command peer lock");
            match peer.as_mut() {
                None => return false,
                Some((id, stream)) => stream.write_all(bytes).err().map(|_| *id),
            }
        };
        match failed {
            Some(id) => {
                self.mark_down(id);
                false
            }
            None => true,
        }
    }
}

struct Inbound {
    time_ns: u64,
    channel: Channel,
    bytes: Vec<u8>,
}

/// Cloneable stop switch for a running bridge.
#[derive(Debug, Clone, Default)]
pub struct StopHandle(Arc<AtomicBool>);

impl StopHandle {
    pub fn stop(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug)]
pub struct LiveReport {
    pub state: TwinState,
    pub counters: TwinCounters,
    pub stats: Option<LatencyStats>,
    /// Seqs whose telemetry was decoded and taken into the twin.
    pub telemetry_accepted: usize,
    pub commands_sent: u64,
    pub commands_unsent: u64,
    pub command_connects: u64,
    pub command_disconnects: u64,
}

pub struct LiveBridge {
    config: TwinConfig,
    options: LiveOptions,
    telemetry: UdpSocket,
    mocap: UdpSocket,
    listener: TcpListener,
    commands: Arc<CommandChannel>,
    stop: StopHandle,
}

fn bind_udp(what: &'static str, addr: SocketAddr) -> Result<UdpSocket, LiveError> {
    let s = UdpSocket::bind(addr).map_err(|source| LiveError::Bind { what, addr, source })?;
    s.set_read_timeout(Some(POLL))?;
    Ok(s)
}

impl LiveBridge {
    pub fn bind(config: TwinConfig, options: LiveOptions) -> Result<Self, LiveError> {
        config.validate()?;
        let telemetry = bind_udp("telemetry", options.telemetry)?;
        let mocap = bind_udp("mocap", options.mocap)?;
        let listener = TcpListener::bind(options.command).map_err(|source| LiveError::Bind {
            what: "command",
            addr: options.command,
            source,
        })?;
        listener.set_nonblocking(true)?;
        Ok(Self {
            config,
            options,
            telemetry,
            mocap,
            listener,
            commands: Arc::new(CommandChannel::default()),
            stop: StopHandle::default(),
        })
    }

    pub fn addrs(&self) -> Result<LiveAddrs, LiveError> {
        Ok(LiveAddrs {
            telemetry: self.telemetry.local_addr()?,
            mocap: self.mocap.local_addr()?,
            command: self.listener.local_addr()?,
        })
    }

    pub fn stop_handle(&self) -> StopHandle {
        self.stop.clone()
    }

    pub fn command_channel(&self) -> Arc<CommandChannel> {
        self.commands.clone()
    }

    /// Runs until the duration elapses, the stop handle fires, or `done`
    /// returns true after a merge tick.
    pub fn run<F>(self, mut done: F) -> Result<LiveReport, LiveError>
    where
        F: FnMut(&TwinEngine) -> bool,
    {
        let start = Instant::now();
        let total_ticks = match self.options.duration {
            Some(d) => (d.as_secs_f64() * TWIN_RATE_HZ as f64).round() as u64,
            None => u64::MAX,
        };
        let mut twin = TwinEngine::new(self.config.clone(), total_ticks)?;
        let mut log = match &self.options.log {
            Some(path) => Some(LogWriter::create(
                path,
                LogHeader {
                    version: VERSION,
                    seed: self.config.seed,
                    created_ns: std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .map_or(0, |d| d.as_nanos() as u64),
                },
            )?),
            None => None,
        };

        let (tx, rx) = mpsc::channel();
        let mut workers = vec![
            ingest(self.telemetry, Channel::Telemetry, start, tx.clone(), self.stop.clone()),
            ingest(self.mocap, Channel::Mocap, start, tx, self.stop.clone()),
            accept(self.listener, self.commands.clone(), self.stop.clone()),
        ];

        let result = merge_loop(
            &mut twin,
            &rx,
            start,
            &self.stop,
            &self.commands,
            log.as_mut(),
            &mut done,
        );
        self.stop.stop();
        for w in workers.drain(..) {
            let _ = w.join();
        }
        let (sent, unsent) = result?;
        let stats = match twin.probe().compute_stats() {
            Ok(s) => Some(s),
            Err(LatencyError::Empty) => None,
            Err(e) => return Err(e.into()),
        };
        Ok(LiveReport {
            state: twin.state().clone(),
            counters: twin.counters(),
            stats,
            telemetry_accepted: twin.probe().deltas_ns(crate::latency::DeltaKind::SocketToApplied).len(),
            commands_sent: sent,
            commands_unsent: unsent,
            command_connects: self.commands.connects(),
            command_disconnects: self.commands.disconnects(),
        })
    }
}

fn elapsed_ns(start: Instant) -> u64 {
    start.elapsed().as_nanos() as u64
}

fn ingest(
    socket: UdpSocket,
    channel: Channel,
    start: Instant,
    tx: Sender<Inbound>,
    stop: StopHandle,
) -> JoinHandle<()> {
    thread::spawn(move || {
        let mut buf = vec![0u8; MAX_DATAGRAM];
        while !stop.is_stopped() {
            match socket.recv_from(&mut buf) {
                Ok((n, _)) => {
                    let msg = Inbound {
                        time_ns: elapsed_ns(start),
                        channel,
                        bytes: buf[..n].to_vec(),
                    };
                    if tx.send(msg).is_err() {
                        return;
                    }
                }
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                // Datagram sockets report stray ICMP errors here; keep going.
                Err(e) => log::debug!("{channel:?} recv: {e}"),
            }
        }
    })
}

fn accept(listener: TcpListener, commands: Arc<CommandChannel>, stop: StopHandle) -> JoinHandle<()> {
    thread::spawn(move || {
        while !stop.is_stopped() {
            match listener.accept() {
                Ok((stream, peer)) => {
                    log::info!("command peer {peer} connected");
                    let _ = stream.set_nonblocking(false);
                    let _ = stream.set_nodelay(true);
                    let Ok(mut reader) = stream.try_clone() else {
                        continue;
                    };
                    let id = commands.attach(stream);
                    let commands = commands.clone();
                    let stop = stop.clone();
                    // The follower never sends on this stream; EOF means it left.
                    thread::spawn(move || {
                        let _ = reader.set_read_timeout(Some(POLL));
                        let mut sink = [0u8; 256];
                        while !stop.is_stopped() {
                            match reader.read(&mut sink) {
                                Ok(0) => break,
                                Ok(_) => {}
                                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                                Err(_) => break,
                            }
                        }
                        if !stop.is_stopped() {
                            commands.mark_down(id);
                        }
                    });
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL / 4),
                Err(e) => log::warn!("command accept: {e}"),
            }
        }
    })
}

fn merge_loop<F>(
    twin: &mut TwinEngine,
    rx: &Receiver<Inbound>,
    start: Instant,
    stop: &StopHandle,
    commands: &CommandChannel,
    mut log: Option<&mut LogWriter<std::fs::File>>,
    done: &mut F,
) -> Result<(u64, u64), LiveError>
where
    F: FnMut(&TwinEngine) -> bool,
{
    let (mut sent, mut unsent) = (0u64, 0u64);
    let mut last_logged = 0u64;
    while let Some(tick_ns) = twin.next_tick_ns() {
        if stop.is_stopped() {
            break;
        }
        let now = elapsed_ns(start);
        if now < tick_ns {
            thread::sleep(Duration::from_nanos(tick_ns - now));
        }
        let mut batch: Vec<Inbound> = rx.try_iter().collect();
        batch.sort_by_key(|m| (m.time_ns, m.channel as u16));
        for m in batch {
            // A datagram stamped just before the previous tick can reach the
            // queue after that tick ran; it is taken as arriving then.
            let floor = twin.state().time_ns;
            let t = if twin.state().ticks > 0 {
                m.time_ns.max(floor)
            } else {
                m.time_ns
            };
            while twin.next_tick_ns().is_some_and(|n| n < t) {
                emit(
                    twin.tick_once()?,
                    commands,
                    log.as_deref_mut(),
                    &mut last_logged,
                    &mut sent,
                    &mut unsent,
                )?;
            }
            if let Some(l) = log.as_deref_mut() {
                let at = t.max(last_logged);
                l.append(at, m.channel, &m.bytes)?;
                last_logged = at;
            }
            twin.on_record(t, m.channel as u16, &m.bytes)?;
        }
        while twin.next_tick_ns().is_some_and(|n| n <= tick_ns) {
            emit(
                twin.tick_once()?,
                commands,
                log.as_deref_mut(),
                &mut last_logged,
                &mut sent,
                &mut unsent,
            )?;
        }
        if done(twin) {
            break;
        }
    }
    Ok((sent, unsent))
}

fn emit(
    command: Option<crate::transport::CommandFrame>,
    commands: &CommandChannel,
    log: Option<&mut LogWriter<std::fs::File>>,
    last_logged: &mut u64,
    sent: &mut u64,
    unsent: &mut u64,
) -> Result<(), LiveError> {
    let Some(c) = command else {
        return Ok(());
    };
    let bytes = encode_command(&c);
    if let Some(l) = log {
        let at = c.time_ns.max(*last_logged);
        l.append(at, Channel::Command, &bytes)?;
        *last_logged = at;
    }
    if commands.send(&bytes) {
        *sent += 1;
    } else {
        *unsent += 1;
    }
    Ok(())
}

#[derive(Debug)]
pub struct SelfTestReport {
    pub sent: usize,
    pub malformed_sent: usize,
    pub live: LiveReport,
    /// Final twin joints equal the last packet sent.
    pub final_state_matches: bool,
}

impl SelfTestReport {
    pub fn passed(&self, min_fraction: f64) -> bool {
        self.live.telemetry_accepted as f64 >= min_fraction * self.sent as f64
            && self.live.counters.telemetry_malformed as usize == self.malformed_sent
            && self.final_state_matches
    }
}

/// Joint positions carried by self-test packet `seq`; distinct per packet
/// and inside every joint range of `config`'s model.
fn probe_positions(config: &TwinConfig, seq: u32) -> Vec<f64> {
    config
        .model
        .movable_joints()
        .enumerate()
        .map(|(j, joint)| {
            let (lo, hi) = (joint.limits.lower.max(-1.0), joint.limits.upper.min(1.0));
            let frac = ((seq as usize * 7 + j * 13) % 101) as f64 / 100.0;
            lo + frac * (hi - lo)
        })
        .collect()
}

/// Sends `packets` telemetry datagrams, with a malformed datagram after
/// every `malformed_every` of them, to a bridge on loopback ports.
pub fn loopback_self_test(
    mut config: TwinConfig,
    packets: usize,
    malformed_every: usize,
) -> Result<SelfTestReport, LiveError> {
    // Finger joints would override the probe values.
    config.finger_joints.clear();
    config.clamp_limits = false;
    let bridge = LiveBridge::bind(config.clone(), LiveOptions::loopback())?;
    let addrs = bridge.addrs()?;
    let stop = bridge.stop_handle();
    let dof = config.model.movable_count();
    let robot_id = config.robot_id;
    let sender_config = config.clone();
    let sender = thread::spawn(move || -> std::io::Result<usize> {
        let socket = UdpSocket::bind("127.0.0.1:0")?;
        let mut malformed = 0;
        for seq in 0..packets as u32 {
            let packet = TelemetryPacket {
                robot_id,
                seq,
                time_ns: seq as u64,
                positions: probe_positions(&sender_config, seq),
                velocities: vec![0.0; dof],
                efforts: vec![0.0; dof],
                gripper_width: 0.08,
                gripper_velocity: 0.0,
            };
            let bytes = encode_telemetry(&packet).expect("finite probe packet");
            socket.send_to(&bytes, addrs.telemetry)?;
            if malformed_every > 0 && (seq as usize + 1) % malformed_every == 0 {
                socket.send_to(&bytes[..bytes.len() / 2], addrs.telemetry)?;
                malformed += 1;
            }
            // Stay well inside the socket buffer.
            thread::sleep(Duration::from_micros(200));
        }
        Ok(malformed)
    });
    let malformed = packets.checked_div(malformed_every).unwrap_or(0);
    let expected = (packets + malformed) as u64;
    let deadline = Instant::now() + Duration::from_secs(10);
    let live = bridge.run(|twin| {
        let all_in = twin.counters().telemetry_received >= expected;
        let caught_up = twin.state().applied_seq == twin.latest_delivered_seq();
        (all_in && caught_up) || Instant::now() > deadline
    })?;
    stop.stop();
    let malformed_sent = sender
        .join()
        .map_err(|_| std::io::Error::other("sender thread panicked"))??;
    let final_state_matches = live
        .state
        .applied_seq
        .is_some_and(|seq| live.state.joint_positions == probe_positions(&config, seq))
        && live.state.applied_seq == (packets as u32).checked_sub(1);
    Ok(SelfTestReport {
        sent: packets,
        malformed_sent,
        live,
        final_state_matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;

    fn twin_config() -> TwinConfig {
        let mut s = ScenarioConfig::builtin_default();
        s.processing = crate::transport::DelayModel::Constant { ms: 0.0 };
        s.build().unwrap().2
    }

    #[test]
    fn self_test_applies_loopback_traffic() {
        let r = loopback_self_test(twin_config(), 300, 50).unwrap();
        assert!(r.passed(0.99), "{r:?}");
        assert_eq!(r.live.counters.telemetry_malformed, 6);
    }

    #[test]
    fn command_peer_loss_is_reported() {
        let mut options = LiveOptions::loopback();
        options.duration = Some(Duration::from_millis(600));
        let bridge = LiveBridge::bind(twin_config(), options).unwrap();
        let addrs = bridge.addrs().unwrap();
        let channel = bridge.command_channel();
        let client = thread::spawn(move || {
            let peer = TcpStream::connect(addrs.command).unwrap();
            thread::sleep(Duration::from_millis(150));
            drop(peer);
            // Telemetry still flows after the follower left.
            thread::sleep(Duration::from_millis(150));
            let s = UdpSocket::bind("127.0.0.1:0").unwrap();
            s.send_to(&[0xde, 0xad], addrs.telemetry).unwrap();
        });
        let report = bridge.run(|_| false).unwrap();
        client.join().unwrap();
        assert_eq!(report.command_connects, 1);
        assert_eq!(report.command_disconnects, 1);
        assert!(!channel.is_up());
        assert_eq!(report.counters.telemetry_malformed, 1);
    }
}
