//! Append-only `.dtrl` traffic log and playback.
//!
//! Layout, little-endian:
//!
//! ```text
//! header  "DTRL" | version u16 | seed u64 | created_ns u64          (22 bytes)
//! record  time_ns u64 | channel u16 | len u32 | payload[len]   (14 + len bytes)
//! ```
//!
//! Each payload is the exact wire frame seen on its channel. A crash
//! mid-append leaves at worst a truncated final record, which readers report
//! and drop.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::transport::{
    decode_command, decode_mocap, decode_telemetry, CodecError, CommandFrame, MocapPacket, TelemetryPacket,
};

pub const MAGIC: &[u8; 4] = b"DTRL";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 22;
pub const RECORD_HEADER_LEN: usize = 14;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("not a replay log (bad magic)")]
    BadMagic,
    #[error("unsupported log version {0}")]
    UnsupportedVersion(u16),
    #[error("log shorter than its header")]
    TruncatedHeader,
    #[error("truncated record after {valid_records} valid records")]
    TruncatedTail { valid_records: usize },
    #[error("record time {time_ns} ns precedes previous record at {last_ns} ns")]
    TimeRegression { time_ns: u64, last_ns: u64 },
    #[error("payload of {0} bytes exceeds the record length field")]
    PayloadTooLarge(usize),
    #[error("record {index}: undecodable payload on channel {channel}: {reason}")]
    Undecodable { index: usize, channel: u16, reason: String },
    #[error("record {index}: sink failed: {reason}")]
    Sink { index: usize, reason: String },
    #[error("log i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Telemetry = 1,
    Mocap = 2,
    Command = 3,
}

impl Channel {
    pub fn from_u16(v: u16) -> Option<Self> {
        match v {
            1 => Some(Channel::Telemetry),
            2 => Some(Channel::Mocap),
            3 => Some(Channel::Command),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogHeader {
    pub version: u16,
    pub seed: u64,
    /// Wall-clock metadata; excluded from content digests.
    pub created_ns: u64,
}

impl LogHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..14].copy_from_slice(&self.seed.to_le_bytes());
        b[14..22].copy_from_slice(&self.created_ns.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, ReplayError> {
        if b.len() < HEADER_LEN {
            return Err(ReplayError::TruncatedHeader);
        }
        if &b[..4] != MAGIC {
            return Err(ReplayError::BadMagic);
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(ReplayError::UnsupportedVersion(version));
        }
        Ok(Self {
            version,
            seed: u64::from_le_bytes(b[6..14].try_into().expect("8 bytes")),
            created_ns: u64::from_le_bytes(b[14..22].try_into().expect("8 bytes")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub time_ns: u64,
    pub channel: u16,
    pub payload: Vec<u8>,
}

impl LogRecord {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.time_ns.to_le_bytes());
        out.extend_from_slice(&self.channel.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
    }
}

/// Builds a log in memory or on any byte sink.
#[derive(Debug)]
pub struct LogWriter<W: Write> {
    sink: W,
    last_ns: Option<u64>,
    records: usize,
    bytes: u64,
    buf: Vec<u8>,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut sink: W, header: LogHeader) -> Result<Self, ReplayError> {
        sink.write_all(&header.to_bytes())?;
        sink.flush()?;
        Ok(Self {
            sink,
            last_ns: None,
            records: 0,
            bytes: HEADER_LEN as u64,
            buf: Vec::new(),
        })
    }

    /// Writes one whole record, or nothing on error.
    pub fn append(&mut self, time_ns: u64, channel: Channel, payload: &[u8]) -> Result<(), ReplayError> {
        self.append_raw(time_ns, channel as u16, payload)
    }

    pub fn append_raw(&mut self, time_ns: u64, channel: u16, payload: &[u8]) -> Result<(), ReplayError> {
        if let Some(last_ns) = self.last_ns {
            if time_ns < last_ns {
                return Err(ReplayError::TimeRegression { time_ns, last_ns });
            }
        }
        if u32::try_from(payload.len()).is_err() {
            return Err(ReplayError::PayloadTooLarge(payload.len()));
        }
        self.buf.clear();
        self.buf.extend_from_slice(&time_ns.to_le_bytes());
        self.buf.extend_from_slice(&channel.to_le_bytes());
        self.buf.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(payload);
        self.sink.write_all(&self.buf)?;
        self.sink.flush()?;
        self.last_ns = Some(time_ns);
        self.records += 1;
        self.bytes += self.buf.len() as u64;
        Ok(())
    }

    pub fn records(&self) -> usize {
        self.records
    }

    pub fn bytes_written(&self) -> u64 {
        self.bytes
    }

    pub fn into_inner(self) -> W {
        self.sink
    }
}

impl LogWriter<File> {
    pub fn create(path: &Path, header: LogHeader) -> Result<Self, ReplayError> {
        Self::new(File::create(path)?, header)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayLog {
    pub header: LogHeader,
    pub records: Vec<LogRecord>,
}

impl ReplayLog {
    pub fn new(seed: u64, created_ns: u64) -> Self {
        Self {
            header: LogHeader {
                version: VERSION,
                seed,
                created_ns,
            },
            records: Vec::new(),
        }
    }

    /// Strict parse: a truncated tail is an error.
    pub fn parse(bytes: &[u8]) -> Result<Self, ReplayError> {
        match Self::recover(bytes)? {
            (log, None) => Ok(log),
            (log, Some(_)) => Err(ReplayError::TruncatedTail {
                valid_records: log.records.len(),
            }),
        }
    }

    /// Parses every complete record. The second value is the number of
    /// trailing bytes that did not form a whole record, if any.
    pub fn recover(bytes: &[u8]) -> Result<(Self, Option<usize>), ReplayError> {
        let header = LogHeader::from_bytes(bytes)?;
        let mut records = Vec::new();
        let mut rest = &bytes[HEADER_LEN..];
        while !rest.is_empty() {
            if rest.len() < RECORD_HEADER_LEN {
                break;
            }
            let time_ns = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes"));
            let channel = u16::from_le_bytes([rest[8], rest[9]]);
            let len = u32::from_le_bytes(rest[10..14].try_into().expect("4 bytes")) as usize;
            let Some(payload) = rest.get(RECORD_HEADER_LEN..RECORD_HEADER_LEN + len) else {
                break;
            };
            records.push(LogRecord {
                time_ns,
                channel,
                payload: payload.to_vec(),
            });
            rest = &rest[RECORD_HEADER_LEN + len..];
        }
        let dangling = (!rest.is_empty()).then_some(rest.len());
        Ok((Self { header, records }, dangling))
    }

    pub fn read(path: &Path) -> Result<Self, ReplayError> {
        Self::parse(&std::fs::read(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.header.to_bytes());
        for r in &self.records {
            r.encode_into(&mut out);
        }
        out
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self
                .records
                .iter()
                .map(|r| RECORD_HEADER_LEN + r.payload.len())
                .sum::<usize>()
    }
}

/// Log bytes with the wall-clock creation field zeroed.
pub fn content_bytes(log_bytes: &[u8]) -> Vec<u8> {
    let mut b = log_bytes.to_vec();
    if b.len() >= HEADER_LEN {
        b[14..22].fill(0);
    }
    b
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelMessage {
    Telemetry(TelemetryPacket),
    Mocap(MocapPacket),
    Command(CommandFrame),
    /// Zero-length payload.
    Heartbeat,
}

pub fn decode_record(r: &LogRecord) -> Result<ChannelMessage, String> {
    let channel = Channel::from_u16(r.channel).ok_or_else(|| format!("unknown channel {}", r.channel))?;
    if r.payload.is_empty() {
        return Ok(ChannelMessage::Heartbeat);
    }
    let err = |e: CodecError| e.to_string();
    Ok(match channel {
        Channel::Telemetry => ChannelMessage::Telemetry(decode_telemetry(&r.payload).map_err(err)?),
        Channel::Mocap => ChannelMessage::Mocap(decode_mocap(&r.payload).map_err(err)?),
        Channel::Command => ChannelMessage::Command(decode_command(&r.payload).map_err(err)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMode {
    /// Records back to back, as fast as the sink takes them.
    Immediate,
    /// Original gaps between records, kept against the clock.
    Timed,
}

pub trait Clock {
    fn now_ns(&self) -> u64;
    fn sleep_until(&mut self, t_ns: u64);
}

/// Simulated clock; sleeping just moves time forward.
#[derive(Debug, Clone, Default)]
pub struct SimClock {
    now: u64,
}

impl SimClock {
    pub fn new(now: u64) -> Self {
        Self { now }
    }
}

impl Clock for SimClock {
    fn now_ns(&self) -> u64 {
        self.now
    }

    fn sleep_until(&mut self, t_ns: u64) {
        self.now = self.now.max(t_ns);
    }
}

#[derive(Debug, Clone)]
pub struct WallClock {
    start: Instant,
}

impl Default for WallClock {
    fn default() -> Self {
        Self { start: Instant::now() }
    }
}

impl Clock for WallClock {
    fn now_ns(&self) -> u64 {
        self.start.elapsed().as_nanos() as u64
    }

    fn sleep_until(&mut self, t_ns: u64) {
        let now = self.now_ns();
        if t_ns > now {
            std::thread::sleep(Duration::from_nanos(t_ns - now));
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReplaySummary {
    pub delivered: usize,
    pub heartbeats: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ReplayOptions {
    pub mode: ReplayMode,
    /// Skip undecodable records instead of halting.
    pub skip_undecodable: bool,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            mode: ReplayMode::Immediate,
            skip_undecodable: false,
        }
    }
}

/// Feeds every record of `log` to `sink` in file order. Heartbeats are
/// counted but not delivered.
pub fn replay<C, F>(
    log: &ReplayLog,
    options: ReplayOptions,
    clock: &mut C,
    mut sink: F,
) -> Result<ReplaySummary, ReplayError>
where
    C: Clock,
    F: FnMut(&LogRecord, &ChannelMessage) -> Result<(), String>,
{
    let mut summary = ReplaySummary::default();
    let base = clock.now_ns();
    let first = log.records.first().map_or(0, |r| r.time_ns);
    for (index, record) in log.records.iter().enumerate() {
        if options.mode == ReplayMode::Timed {
            clock.sleep_until(base + (record.time_ns - first));
        }
        let message = match decode_record(record) {
            Ok(m) => m,
            Err(_) if options.skip_undecodable => {
                summary.skipped += 1;
                continue;
            }
            Err(reason) => {
                return Err(ReplayError::Undecodable {
                    index,
                    channel: record.channel,
                    reason,
                })
            }
        };
        if message == ChannelMessage::Heartbeat {
            summary.heartbeats += 1;
            continue;
        }
        sink(record, &message).map_err(|reason| ReplayError::Sink { index, reason })?;
        summary.delivered += 1;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{encode_mocap, TrackingQuality};
    use proptest::prelude::*;

    fn mocap_bytes(seq: u32) -> Vec<u8> {
        encode_mocap(&MocapPacket {
            object_id: 1,
            seq,
            time_ns: seq as u64,
            position: [0.0, 0.0, 0.0],
            quaternion: [1.0, 0.0, 0.0, 0.0],
            quality: TrackingQuality::Tracked,
        })
        .unwrap()
    }

    fn header() -> LogHeader {
        LogHeader {
            version: VERSION,
            seed: 42,
            created_ns: 7,
        }
    }

    #[test]
    fn write_reopen_iterate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.dtrl");
        let mut w = LogWriter::create(&path, header()).unwrap();
        for k in 0..10u32 {
            w.append(k as u64 * 1000, Channel::Mocap, &mocap_bytes(k)).unwrap();
        }
        w.append(20_000, Channel::Telemetry, &[]).unwrap();
        let written = w.bytes_written();
        drop(w);
        let log = ReplayLog::read(&path).unwrap();
        assert_eq!(log.header, header());
        assert_eq!(log.records.len(), 11);
        assert_eq!(log.records[3].payload, mocap_bytes(3));
        assert_eq!(std::fs::metadata(&path).unwrap().len(), written);
        assert_eq!(written as usize, 22 + 10 * (14 + 73) + 14);
    }

    #[test]
    fn regression_leaves_sink_untouched() {
        let mut w = LogWriter::new(Vec::new(), header()).unwrap();
        w.append(100, Channel::Mocap, &mocap_bytes(0)).unwrap();
        let before = w.bytes_written();
        assert!(matches!(
            w.append(99, Channel::Mocap, &mocap_bytes(1)),
            Err(ReplayError::TimeRegression {
                time_ns: 99,
                last_ns: 100
            })
        ));
        assert_eq!(w.into_inner().len() as u64, before);
    }

    #[test]
    fn truncated_tail_reports_valid_count() {
        let mut w = LogWriter::new(Vec::new(), header()).unwrap();
        for k in 0..5u32 {
            w.append(k as u64, Channel::Mocap, &mocap_bytes(k)).unwrap();
        }
        let mut bytes = w.into_inner();
        bytes.truncate(bytes.len() - 10);
        assert!(matches!(
            ReplayLog::parse(&bytes),
            Err(ReplayError::TruncatedTail { valid_records: 4 })
        ));
        let (log, dangling) = ReplayLog::recover(&bytes).unwrap();
        assert_eq!(log.records.len(), 4);
        assert_eq!(dangling, Some(14 + 73 - 10));
    }

    #[test]
    fn header_checks() {
        let mut b = header().to_bytes().to_vec();
        assert!(ReplayLog::parse(&b[..10]).is_err());
        b[4] = 9;
        assert!(matches!(ReplayLog::parse(&b), Err(ReplayError::UnsupportedVersion(9))));
        b[0] = b'X';
        assert!(matches!(ReplayLog::parse(&b), Err(ReplayError::BadMagic)));
    }

    #[test]
    fn empty_log_replays_nothing() {
        let log = ReplayLog::new(1, 0);
        let mut n = 0;
        let s = replay(&log, ReplayOptions::default(), &mut SimClock::default(), |_, _| {
            n += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!((s, n), (ReplaySummary::default(), 0));
    }

    fn mixed_log() -> ReplayLog {
        let mut log = ReplayLog::new(1, 0);
        let push = |log: &mut ReplayLog, t, c: Channel, p: Vec<u8>| {
            log.records.push(LogRecord {
                time_ns: t,
                channel: c as u16,
                payload: p,
            })
        };
        push(&mut log, 1_000, Channel::Mocap, mocap_bytes(0));
        push(&mut log, 5_000, Channel::Telemetry, vec![]);
        push(&mut log, 9_000, Channel::Mocap, vec![1, 2, 3]);
        push(&mut log, 20_000, Channel::Mocap, mocap_bytes(1));
        log
    }

    #[test]
    fn undecodable_halts_with_index_or_is_skipped() {
        let log = mixed_log();
        let err = replay(&log, ReplayOptions::default(), &mut SimClock::default(), |_, _| Ok(())).unwrap_err();
        assert!(matches!(
            err,
            ReplayError::Undecodable {
                index: 2,
                channel: 2,
                ..
            }
        ));
        let opts = ReplayOptions {
            skip_undecodable: true,
            ..Default::default()
        };
        let s = replay(&log, opts, &mut SimClock::default(), |_, _| Ok(())).unwrap();
        assert_eq!(
            s,
            ReplaySummary {
                delivered: 2,
                heartbeats: 1,
                skipped: 1
            }
        );
    }

    #[test]
    fn timed_mode_keeps_gaps() {
        let log = mixed_log();
        let opts = ReplayOptions {
            mode: ReplayMode::Timed,
            skip_undecodable: true,
        };
        let mut clock = SimClock::new(100);
        let mut seen = Vec::new();
        let mut probe = SimClock::new(0);
        replay(&log, opts, &mut clock, |r, _| {
            seen.push(r.time_ns);
            Ok(())
        })
        .unwrap();
        assert_eq!(clock.now_ns(), 100 + 19_000);
        assert_eq!(seen, vec![1_000, 20_000]);
        let opts = ReplayOptions {
            mode: ReplayMode::Immediate,
            skip_undecodable: true,
        };
        replay(&log, opts, &mut probe, |_, _| Ok(())).unwrap();
        assert_eq!(probe.now_ns(), 0);
    }

    #[test]
    fn content_bytes_ignores_creation_time() {
        let a = LogWriter::new(Vec::new(), header()).unwrap().into_inner();
        let b = LogWriter::new(
            Vec::new(),
            LogHeader {
                created_ns: 99,
                ..header()
            },
        )
        .unwrap()
        .into_inner();
        assert_ne!(a, b);
        assert_eq!(content_bytes(&a), content_bytes(&b));
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(
            recs in proptest::collection::vec((0u64..1000, 1u16..4, proptest::collection::vec(any::<u8>(), 0..64)), 0..40)
        ) {
            let mut w = LogWriter::new(Vec::new(), header()).unwrap();
            let mut t = 0;
            let mut expected = Vec::new();
            for (dt, ch, payload) in recs {
                t += dt;
                w.append_raw(t, ch, &payload).unwrap();
                expected.push(LogRecord { time_ns: t, channel: ch, payload });
            }
            let bytes = w.into_inner();
            let log = ReplayLog::parse(&bytes).unwrap();
            prop_assert_eq!(bytes.len(), log.encoded_len());
            prop_assert_eq!(&log.to_bytes(), &bytes);
            prop_assert_eq!(log.records, expected);
        }
    }
}
