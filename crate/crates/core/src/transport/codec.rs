//! Little-endian fixed layouts for the three wire-message kinds.
//!
//! ```text
//! telemetry  magic u16 0x4A54 | version u8 | robot_id u8 | seq u32 | time_ns u64 | dof u8
//!            dof × (position f64, velocity f64, effort f64) | gripper_width f64 | gripper_velocity f64
//! mocap      magic u16 0x4D43 | version u8 | object_id u8 | seq u32 | time_ns u64
//!            position f64×3 | quaternion f64×4 (w,x,y,z) | quality u8
//! command    length u32 | magic u16 0x434D | version u8 | kind u8 | robot_id u8 | time_ns u64
//!            kind 1: direction f64×3 | depth f64 | stiffness f64
//! ```

use thiserror::Error;

pub const TELEMETRY_MAGIC: u16 = 0x4A54;
pub const MOCAP_MAGIC: u16 = 0x4D43;
pub const COMMAND_MAGIC: u16 = 0x434D;
pub const WIRE_VERSION: u8 = 1;

pub const TELEMETRY_HEADER_LEN: usize = 17;
pub const TELEMETRY_JOINT_LEN: usize = 24;
pub const MOCAP_LEN: usize = 73;
/// Bytes after the length prefix and before the payload.
pub const COMMAND_HEADER_LEN: usize = 13;
pub const ZONE_REPULSION_PAYLOAD_LEN: usize = 40;

const MOCAP_UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("bad magic: expected {expected:#06x}, found {found:#06x}")]
    BadMagic { expected: u16, found: u16 },
    #[error("unsupported wire version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown command kind {0}")]
    UnknownKind(u8),
    #[error("{0} joints do not fit the u8 dof field")]
    DofOverflow(usize),
    #[error("joint arrays differ in length: {positions}/{velocities}/{efforts}")]
    RaggedJoints {
        positions: usize,
        velocities: usize,
        efforts: usize,
    },
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("length prefix {declared} does not match {actual} remaining bytes")]
    LengthPrefix { declared: usize, actual: usize },
    #[error("invalid tracking quality {0}")]
    InvalidQuality(u8),
    #[error("tracked sample carries a non-unit quaternion (norm {0})")]
    NonUnitQuaternion(f64),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let end = self.pos + N;
        let bytes = self.buf.get(self.pos..end).ok_or(CodecError::Truncated {
            needed: end,
            available: self.buf.len(),
        })?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice length checked"))
    }

    fn need(&self, total: usize) -> Result<(), CodecError> {
        if self.buf.len() < total {
            return Err(CodecError::Truncated {
                needed: total,
                available: self.buf.len(),
            });
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
    fn f64x<const N: usize>(&mut self) -> Result<[f64; N], CodecError> {
        let mut out = [0.0; N];
        for v in &mut out {
            *v = self.f64()?;
        }
        Ok(out)
    }

    fn magic(&mut self, expected: u16) -> Result<(), CodecError> {
        let found = self.u16()?;
        if found != expected {
            return Err(CodecError::BadMagic { expected, found });
        }
        let version = self.u8()?;
        if version != WIRE_VERSION {
            return Err(CodecError::UnsupportedVersion(version));
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), CodecError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}

/// Joint sensor sample streamed from a robot controller to the twin.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryPacket {
    pub robot_id: u8,
    pub seq: u32,
    pub time_ns: u64,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub efforts: Vec<f64>,
    pub gripper_width: f64,
    pub gripper_velocity: f64,
}

impl TelemetryPacket {
    pub fn dof(&self) -> usize {
        self.positions.len()
    }

    pub fn encoded_len(&self) -> usize {
        TELEMETRY_HEADER_LEN + self.dof() * TELEMETRY_JOINT_LEN + 16
    }
}

pub fn encode_telemetry(p: &TelemetryPacket) -> Result<Vec<u8>, CodecError> {
    let dof = p.positions.len();
    if p.velocities.len() != dof || p.efforts.len() != dof {
        return Err(CodecError::RaggedJoints {
            positions: dof,
            velocities: p.velocities.len(),
            efforts: p.efforts.len(),
        });
    }
    let dof_u8 = u8::try_from(dof).map_err(|_| CodecError::DofOverflow(dof))?;
    let mut out = Vec::with_capacity(p.encoded_len());
    out.extend_from_slice(&TELEMETRY_MAGIC.to_le_bytes());
    out.push(WIRE_VERSION);
    out.push(p.robot_id);
    out.extend_from_slice(&p.seq.to_le_bytes());
    out.extend_from_slice(&p.time_ns.to_le_bytes());
    out.push(dof_u8);
    for i in 0..dof {
        out.extend_from_slice(&p.positions[i].to_le_bytes());
        out.extend_from_slice(&p.velocities[i].to_le_bytes());
        out.extend_from_slice(&p.efforts[i].to_le_bytes());
    }
    out.extend_from_slice(&p.gripper_width.to_le_bytes());
    out.extend_from_slice(&p.gripper_velocity.to_le_bytes());
    Ok(out)
}

pub fn decode_telemetry(buf: &[u8]) -> Result<TelemetryPacket, CodecError> {
    let mut r = Reader::new(buf);
    r.need(TELEMETRY_HEADER_LEN)?;
    r.magic(TELEMETRY_MAGIC)?;
    let robot_id = r.u8()?;
    let seq = r.u32()?;
    let time_ns = r.u64()?;
    let dof = r.u8()? as usize;
    r.need(TELEMETRY_HEADER_LEN + dof * TELEMETRY_JOINT_LEN + 16)?;
    let mut positions = Vec::with_capacity(dof);
    let mut velocities = Vec::with_capacity(dof);
    let mut efforts = Vec::with_capacity(dof);
    for _ in 0..dof {
        positions.push(r.f64()?);
        velocities.push(r.f64()?);
        efforts.push(r.f64()?);
    }
    let gripper_width = r.f64()?;
    let gripper_velocity = r.f64()?;
    r.finish()?;
    Ok(TelemetryPacket {
        robot_id,
        seq,
        time_ns,
        positions,
        velocities,
        efforts,
        gripper_width,
        gripper_velocity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackingQuality {
    Lost = 0,
    Tracked = 1,
}

/// One tracker frame for a single marker object.
#[derive(Debug, Clone, PartialEq)]
pub struct MocapPacket {
    pub object_id: u8,
    pub seq: u32,
    pub time_ns: u64,
    /// Meters.
    pub position: [f64; 3],
    /// `(w, x, y, z)`.
    pub quaternion: [f64; 4],
    pub quality: TrackingQuality,
}

fn check_tracked_quaternion(q: &[f64; 4], quality: TrackingQuality) -> Result<(), CodecError> {
    if quality == TrackingQuality::Tracked {
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= MOCAP_UNIT_TOLERANCE) {
            return Err(CodecError::NonUnitQuaternion(norm));
        }
    }
    Ok(())
}

pub fn encode_mocap(p: &MocapPacket) -> Result<Vec<u8>, CodecError> {
    check_tracked_quaternion(&p.quaternion, p.quality)?;
    let mut out = Vec::with_capacity(MOCAP_LEN);
    out.extend_from_slice(&MOCAP_MAGIC.to_le_bytes());
    out.push(WIRE_VERSION);
    out.push(p.object_id);
    out.extend_from_slice(&p.seq.to_le_bytes());
    out.extend_from_slice(&p.time_ns.to_le_bytes());
    for v in p.position.iter().chain(&p.quaternion) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(p.quality as u8);
    Ok(out)
}

pub fn decode_mocap(buf: &[u8]) -> Result<MocapPacket, CodecError> {
    let mut r = Reader::new(buf);
    r.need(MOCAP_LEN)?;
    r.magic(MOCAP_MAGIC)?;
    let object_id = r.u8()?;
    let seq = r.u32()?;
    let time_ns = r.u64()?;
    let position = r.f64x::<3>()?;
    let quaternion = r.f64x::<4>()?;
    let quality = match r.u8()? {
        0 => TrackingQuality::Lost,
        1 => TrackingQuality::Tracked,
        other => return Err(CodecError::InvalidQuality(other)),
    };
    r.finish()?;
    check_tracked_quaternion(&quaternion, quality)?;
    Ok(MocapPacket {
        object_id,
        seq,
        time_ns,
        position,
        quaternion,
        quality,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    /// Kind 1: outward push away from a prohibited zone.
    ZoneRepulsion {
        direction: [f64; 3],
        depth: f64,
        stiffness: f64,
    },
}

impl Command {
    pub fn kind(&self) -> u8 {
        match self {
            Command::ZoneRepulsion { .. } => 1,
        }
    }
}

/// Twin-to-robot message carried over the stream link.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandFrame {
    pub robot_id: u8,
    pub time_ns: u64,
    pub command: Command,
}

pub fn encode_command(f: &CommandFrame) -> Vec<u8> {
    let payload_len = match f.command {
        Command::ZoneRepulsion { .. } => ZONE_REPULSION_PAYLOAD_LEN,
    };
    let body_len = COMMAND_HEADER_LEN + payload_len;
    let mut out = Vec::with_capacity(4 + body_len);
    out.extend_from_slice(&(body_len as u32).to_le_bytes());
    out.extend_from_slice(&COMMAND_MAGIC.to_le_bytes());
    out.push(WIRE_VERSION);
    out.push(f.command.kind());
    out.push(f.robot_id);
    out.extend_from_slice(&f.time_ns.to_le_bytes());
    match &f.command {
        Command::ZoneRepulsion {
            direction,
            depth,
            stiffness,
        } => {
            for v in direction.iter().chain([depth, stiffness]) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Decodes exactly one length-prefixed frame occupying all of `buf`.
pub fn decode_command(buf: &[u8]) -> Result<CommandFrame, CodecError> {
    let (frame, used) = decode_command_prefix(buf)?;
    if used != buf.len() {
        return Err(CodecError::TrailingBytes(buf.len() - used));
    }
    Ok(frame)
}

/// Decodes the first frame of a byte stream, returning it with the number of
/// bytes it occupied. A partially received frame yields `Truncated`.
pub fn decode_command_prefix(buf: &[u8]) -> Result<(CommandFrame, usize), CodecError> {
    let mut r = Reader::new(buf);
    let declared = r.u32()? as usize;
    let total = 4 + declared;
    r.need(total)?;
    let frame_buf = &buf[..total];
    let mut r = Reader::new(frame_buf);
    r.pos = 4;
    r.need(4 + COMMAND_HEADER_LEN)?;
    r.magic(COMMAND_MAGIC)?;
    let kind = r.u8()?;
    let robot_id = r.u8()?;
    let time_ns = r.u64()?;
    let command = match kind {
        1 => {
            let expected = COMMAND_HEADER_LEN + ZONE_REPULSION_PAYLOAD_LEN;
            if declared != expected {
                return Err(CodecError::LengthPrefix {
                    declared,
                    actual: expected,
                });
            }
            let direction = r.f64x::<3>()?;
            let depth = r.f64()?;
            let stiffness = r.f64()?;
            Command::ZoneRepulsion {
                direction,
                depth,
                stiffness,
            }
        }
        other => return Err(CodecError::UnknownKind(other)),
    };
    r.finish()?;
    Ok((
        CommandFrame {
            robot_id,
            time_ns,
            command,
        },
        total,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Frozen from an independent `struct.pack('<...')` rendering of each layout.
    const TELEMETRY_GOLDEN: &str = "544a01032a00000000ca9a3b0000000002000000000000e03f000000000000f4bf0000000000000040000000000000e0bf00000000000000000000000000000c407b14ae47e17ab43f7b14ae47e17a84bf";
    const MOCAP_GOLDEN: &str = "434d01020700000015cd5b0700000000000000000000f03f0000000000000040000000000000e03f000000000000f03f00000000000000000000000000000000000000000000000001";
    const COMMAND_GOLDEN: &str = "350000004d430101012a50fe0000000000000000000000f03f000000000000000000000000000000009a9999999999b93f0000000000407f40";

    fn sample_telemetry() -> TelemetryPacket {
        TelemetryPacket {
            robot_id: 3,
            seq: 42,
            time_ns: 1_000_000_000,
            positions: vec![0.5, -0.5],
            velocities: vec![-1.25, 0.0],
            efforts: vec![2.0, 3.5],
            gripper_width: 0.08,
            gripper_velocity: -0.01,
        }
    }

    fn sample_command() -> CommandFrame {
        CommandFrame {
            robot_id: 1,
            time_ns: 16_666_666,
            command: Command::ZoneRepulsion {
                direction: [1.0, 0.0, 0.0],
                depth: 0.1,
                stiffness: 500.0,
            },
        }
    }

    #[test]
    fn telemetry_golden_bytes() {
        let bytes = encode_telemetry(&sample_telemetry()).unwrap();
        assert_eq!(hex::encode(&bytes), TELEMETRY_GOLDEN);
        assert_eq!(decode_telemetry(&bytes).unwrap(), sample_telemetry());
    }

    #[test]
    fn mocap_golden_bytes() {
        let p = MocapPacket {
            object_id: 2,
            seq: 7,
            time_ns: 123_456_789,
            position: [1.0, 2.0, 0.5],
            quaternion: [1.0, 0.0, 0.0, 0.0],
            quality: TrackingQuality::Tracked,
        };
        let bytes = encode_mocap(&p).unwrap();
        assert_eq!(bytes.len(), MOCAP_LEN);
        assert_eq!(hex::encode(&bytes), MOCAP_GOLDEN);
        assert_eq!(decode_mocap(&bytes).unwrap(), p);
    }

    #[test]
    fn command_golden_bytes_and_payload_size() {
        let bytes = encode_command(&sample_command());
        assert_eq!(hex::encode(&bytes), COMMAND_GOLDEN);
        // 3·8 direction + 8 depth + 8 stiffness after the 4 + 13 header bytes
        assert_eq!(bytes.len() - 4 - COMMAND_HEADER_LEN, 3 * 8 + 8 + 8);
        assert_eq!((bytes.len() - 4 - COMMAND_HEADER_LEN) % 8, 0);
        assert_eq!(decode_command(&bytes).unwrap(), sample_command());
    }

    #[test]
    fn one_byte_short_is_a_framing_error() {
        let t = encode_telemetry(&sample_telemetry()).unwrap();
        assert!(matches!(
            decode_telemetry(&t[..t.len() - 1]),
            Err(CodecError::Truncated { .. })
        ));
        let m = hex::decode(MOCAP_GOLDEN).unwrap();
        assert!(matches!(
            decode_mocap(&m[..m.len() - 1]),
            Err(CodecError::Truncated { .. })
        ));
        let c = encode_command(&sample_command());
        assert!(matches!(
            decode_command(&c[..c.len() - 1]),
            Err(CodecError::Truncated { .. })
        ));
    }

    #[test]
    fn rejects_bad_magic_version_kind() {
        let mut t = encode_telemetry(&sample_telemetry()).unwrap();
        t[0] ^= 0xFF;
        assert!(matches!(decode_telemetry(&t), Err(CodecError::BadMagic { .. })));
        let mut t = encode_telemetry(&sample_telemetry()).unwrap();
        t[2] = 2;
        assert_eq!(decode_telemetry(&t), Err(CodecError::UnsupportedVersion(2)));
        let mut c = encode_command(&sample_command());
        c[7] = 9;
        assert_eq!(decode_command(&c), Err(CodecError::UnknownKind(9)));
        let m = hex::decode(MOCAP_GOLDEN).unwrap();
        assert!(matches!(decode_telemetry(&m), Err(CodecError::BadMagic { .. })));
    }

    #[test]
    fn rejects_trailing_bytes_and_bad_prefix() {
        let mut t = encode_telemetry(&sample_telemetry()).unwrap();
        t.push(0);
        assert_eq!(decode_telemetry(&t), Err(CodecError::TrailingBytes(1)));
        let mut c = encode_command(&sample_command());
        c.extend_from_slice(&[0; 8]);
        c[0] += 8;
        assert!(matches!(decode_command(&c), Err(CodecError::LengthPrefix { .. })));
    }

    #[test]
    fn dof_overflow_and_ragged_arrays() {
        let mut p = sample_telemetry();
        p.positions = vec![0.0; 256];
        p.velocities = vec![0.0; 256];
        p.efforts = vec![0.0; 256];
        assert_eq!(encode_telemetry(&p), Err(CodecError::DofOverflow(256)));
        let mut p = sample_telemetry();
        p.efforts.pop();
        assert!(matches!(encode_telemetry(&p), Err(CodecError::RaggedJoints { .. })));
    }

    #[test]
    fn mocap_quality_rules() {
        let mut m = hex::decode(MOCAP_GOLDEN).unwrap();
        *m.last_mut().unwrap() = 3;
        assert_eq!(decode_mocap(&m), Err(CodecError::InvalidQuality(3)));
        let lost = MocapPacket {
            object_id: 1,
            seq: 0,
            time_ns: 0,
            position: [0.0; 3],
            quaternion: [0.0; 4],
            quality: TrackingQuality::Lost,
        };
        let bytes = encode_mocap(&lost).unwrap();
        assert_eq!(decode_mocap(&bytes).unwrap(), lost);
        let bad = MocapPacket {
            quality: TrackingQuality::Tracked,
            ..lost
        };
        assert!(matches!(encode_mocap(&bad), Err(CodecError::NonUnitQuaternion(_))));
    }

    #[test]
    fn stream_prefix_decoding_splits_frames() {
        let mut stream = encode_command(&sample_command());
        let second = CommandFrame {
            time_ns: 33_333_333,
            ..sample_command()
        };
        stream.extend(encode_command(&second));
        let (a, used) = decode_command_prefix(&stream).unwrap();
        assert_eq!(a, sample_command());
        let (b, used_b) = decode_command_prefix(&stream[used..]).unwrap();
        assert_eq!(b, second);
        assert_eq!(used + used_b, stream.len());
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL
    }

    proptest! {
        #[test]
        fn telemetry_roundtrip(
            robot_id in any::<u8>(), seq in any::<u32>(), time_ns in any::<u64>(),
            joints in prop::collection::vec((finite(), finite(), finite()), 0..=32),
            gw in finite(), gv in finite(),
        ) {
            let p = TelemetryPacket {
                robot_id, seq, time_ns,
                positions: joints.iter().map(|j| j.0).collect(),
                velocities: joints.iter().map(|j| j.1).collect(),
                efforts: joints.iter().map(|j| j.2).collect(),
                gripper_width: gw, gripper_velocity: gv,
            };
            let bytes = encode_telemetry(&p).unwrap();
            prop_assert_eq!(bytes.len(), p.encoded_len());
            prop_assert_eq!(decode_telemetry(&bytes).unwrap(), p);
        }

        #[test]
        fn mocap_and_command_roundtrip(
            id in any::<u8>(), seq in any::<u32>(), time_ns in any::<u64>(),
            pos in prop::array::uniform3(finite()),
            q in prop::array::uniform4(-1.0f64..1.0),
            tracked in any::<bool>(),
            dir in prop::array::uniform3(finite()), depth in finite(), k in finite(),
        ) {
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assume!(n > 1e-3);
            let m = MocapPacket {
                object_id: id, seq, time_ns, position: pos,
                quaternion: q.map(|v| v / n),
                quality: if tracked { TrackingQuality::Tracked } else { TrackingQuality::Lost },
            };
            prop_assert_eq!(decode_mocap(&encode_mocap(&m).unwrap()).unwrap(), m);
            let c = CommandFrame {
                robot_id: id, time_ns,
                command: Command::ZoneRepulsion { direction: dir, depth, stiffness: k },
            };
            prop_assert_eq!(decode_command(&encode_command(&c)).unwrap(), c);
        }
    }
}
