//! Ring-to-phone wire protocol.
//!
//! Every BLE notification carries one fixed-size packet:
//!
//! ```text
//! offset  size  field
//!      0     1  seq            wrapping u8, +1 per packet
//!      1     1  flags          bit0 start-of-frame, bit1 imu-valid, bit2 button
//!      2    12  imu            accel x,y,z then gyro x,y,z as i16 LE
//!     14   233  camera payload
//! ```
//!
//! A 160x120 frame spans 83 packets. The last packet carries 94 pixel bytes
//! followed by 139 zero bytes of padding. There is no length field: a frame
//! ends when the next start-of-frame packet arrives.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::image::GrayImage;

pub const PACKET_LEN: usize = 247;
pub const HEADER_LEN: usize = 14;
pub const PAYLOAD_LEN: usize = PACKET_LEN - HEADER_LEN;

pub const FRAME_WIDTH: usize = 160;
pub const FRAME_HEIGHT: usize = 120;
pub const FRAME_BYTES: usize = FRAME_WIDTH * FRAME_HEIGHT;
pub const PACKETS_PER_FRAME: usize = FRAME_BYTES.div_ceil(PAYLOAD_LEN);
/// Pixel bytes carried by the final packet of a frame.
pub const LAST_PACKET_DATA: usize = FRAME_BYTES - (PACKETS_PER_FRAME - 1) * PAYLOAD_LEN;

const FLAG_SOF: u8 = 0b001;
const FLAG_IMU_VALID: u8 = 0b010;
const FLAG_BUTTON: u8 = 0b100;

/// Accelerometer full scale, in g.
pub const ACCEL_FULL_SCALE_G: f64 = 4.0;
/// Gyroscope full scale, in degrees per second.
pub const GYRO_FULL_SCALE_DPS: f64 = 2000.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("camera payload is {0} bytes, expected {PAYLOAD_LEN}")]
    PayloadLengthMismatch(usize),
    #[error("packet is {0} bytes, expected {PACKET_LEN}")]
    TruncatedPacket(usize),
    #[error("frame buffer is {0} bytes, expected {FRAME_BYTES}")]
    BadFrameSize(usize),
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("capture declares {declared} packets but holds {found}")]
    CountMismatch { declared: u32, found: usize },
    #[error(transparent)]
    Packet(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct StatusFlags {
    pub start_of_frame: bool,
    pub imu_valid: bool,
    pub button_pressed: bool,
}

impl StatusFlags {
    pub fn to_byte(self) -> u8 {
        let mut b = 0;
        if self.start_of_frame {
            b |= FLAG_SOF;
        }
        if self.imu_valid {
            b |= FLAG_IMU_VALID;
        }
        if self.button_pressed {
            b |= FLAG_BUTTON;
        }
        b
    }

    /// Reserved bits 3..=7 are ignored.
    pub fn from_byte(b: u8) -> Self {
        Self {
            start_of_frame: b & FLAG_SOF != 0,
            imu_valid: b & FLAG_IMU_VALID != 0,
            button_pressed: b & FLAG_BUTTON != 0,
        }
    }
}

/// One raw 6-axis IMU reading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ImuSample {
    pub accel: [i16; 3],
    pub gyro: [i16; 3],
}

impl ImuSample {
    pub const WIRE_LEN: usize = 12;

    pub fn accel_g(&self) -> [f64; 3] {
        self.accel.map(|c| c as f64 * ACCEL_FULL_SCALE_G / 32768.0)
    }

    pub fn gyro_dps(&self) -> [f64; 3] {
        self.gyro.map(|c| c as f64 * GYRO_FULL_SCALE_DPS / 32768.0)
    }

    /// Quantises an acceleration in g to raw counts, saturating at full scale.
    pub fn accel_counts_from_g(g: [f64; 3]) -> [i16; 3] {
        g.map(|v| {
            (v * 32768.0 / ACCEL_FULL_SCALE_G)
                .round()
                .clamp(i16::MIN as f64, i16::MAX as f64) as i16
        })
    }

    fn write_to(&self, buf: &mut [u8]) {
        for (i, v) in self.accel.iter().chain(self.gyro.iter()).enumerate() {
            buf[2 * i..2 * i + 2].copy_from_slice(&v.to_le_bytes());
        }
    }

    fn read_from(buf: &[u8]) -> Self {
        let word = |i: usize| i16::from_le_bytes([buf[2 * i], buf[2 * i + 1]]);
        Self {
            accel: [word(0), word(1), word(2)],
            gyro: [word(3), word(4), word(5)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RingPacket {
    pub seq: u8,
    pub flags: StatusFlags,
    pub imu: ImuSample,
    pub camera_payload: Vec<u8>,
}

impl RingPacket {
    /// A packet with no image data (zero payload).
    pub fn blank(seq: u8) -> Self {
        Self {
            seq,
            flags: StatusFlags::default(),
            imu: ImuSample::default(),
            camera_payload: vec![0; PAYLOAD_LEN],
        }
    }
}

pub fn encode_packet(p: &RingPacket) -> Result<[u8; PACKET_LEN], ProtocolError> {
    if p.camera_payload.len() != PAYLOAD_LEN {
        return Err(ProtocolError::PayloadLengthMismatch(p.camera_payload.len()));
    }
    let mut out = [0u8; PACKET_LEN];
    out[0] = p.seq;
    out[1] = p.flags.to_byte();
    p.imu.write_to(&mut out[2..HEADER_LEN]);
    out[HEADER_LEN..].copy_from_slice(&p.camera_payload);
    Ok(out)
}

pub fn decode_packet(raw: &[u8]) -> Result<RingPacket, ProtocolError> {
    if raw.len() != PACKET_LEN {
        return Err(ProtocolError::TruncatedPacket(raw.len()));
    }
    Ok(RingPacket {
        seq: raw[0],
        flags: StatusFlags::from_byte(raw[1]),
        imu: ImuSample::read_from(&raw[2..HEADER_LEN]),
        camera_payload: raw[HEADER_LEN..].to_vec(),
    })
}

/// Writes a capture log: `u32` LE packet count, then 247-byte records.
pub fn write_capture<W: Write>(mut w: W, packets: &[RingPacket]) -> Result<(), CaptureError> {
    let count = u32::try_from(packets.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "too many packets"))?;
    w.write_all(&count.to_le_bytes())?;
    for p in packets {
        w.write_all(&encode_packet(p)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_capture<R: Read>(mut r: R) -> Result<Vec<RingPacket>, CaptureError> {
    let mut count = [0u8; 4];
    r.read_exact(&mut count)?;
    let declared = u32::from_le_bytes(count);
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if rest.len() != declared as usize * PACKET_LEN {
        return Err(CaptureError::CountMismatch {
            declared,
            found: rest.len() / PACKET_LEN,
        });
    }
    rest.chunks_exact(PACKET_LEN)
        .map(|c| decode_packet(c).map_err(CaptureError::from))
        .collect()
}

/// Per-packet side channel surfaced regardless of image validity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketTelemetry {
    pub seq: u8,
    /// Present only when the packet's imu-valid flag was set.
    pub imu: Option<ImuSample>,
    pub button: bool,
}

/// A reassembled 160x120 grayscale frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub first_seq: u8,
    pub imu_trace: Vec<PacketTelemetry>,
}

impl Frame {
    pub fn new(pixels: Vec<u8>) -> Result<Self, ProtocolError> {
        if pixels.len() != FRAME_BYTES {
            return Err(ProtocolError::BadFrameSize(pixels.len()));
        }
        Ok(Self {
            width: FRAME_WIDTH,
            height: FRAME_HEIGHT,
            pixels,
            first_seq: 0,
            imu_trace: Vec::new(),
        })
    }

    pub fn from_image(img: &GrayImage) -> Result<Self, ProtocolError> {
        if img.width() != FRAME_WIDTH || img.height() != FRAME_HEIGHT {
            return Err(ProtocolError::BadFrameSize(img.pixels().len()));
        }
        Self::new(img.pixels().to_vec())
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::new(self.width, self.height, self.pixels.clone())
            .expect("frame dimensions are validated on construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvalidReason {
    /// A sequence gap was observed while the frame was in progress.
    SequenceGap,
    /// The frame was closed with too few or too many packets.
    WrongLength { packets: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssemblerEvent {
    Telemetry(PacketTelemetry),
    SequenceGap { expected: u8, got: u8 },
    FrameInvalidated { first_seq: u8, reason: InvalidReason },
    /// A packet arrived with no frame open (stream joined mid-frame or after a gap).
    Discarded { seq: u8 },
}

#[derive(Debug, Clone)]
struct InProgress {
    first_seq: u8,
    pixels: Vec<u8>,
    packets: usize,
    telemetry: Vec<PacketTelemetry>,
}

/// Frame reassembly state for one connection.
#[derive(Debug, Clone, Default)]
pub struct Assembler {
    last_seq: Option<u8>,
    current: Option<InProgress>,
}

impl Assembler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds one packet in arrival order.
    pub fn push(&mut self, p: &RingPacket) -> (Option<Frame>, Vec<AssemblerEvent>) {
        let mut events = Vec::new();
        let telemetry = PacketTelemetry {
            seq: p.seq,
            imu: p.flags.imu_valid.then_some(p.imu),
            button: p.flags.button_pressed,
        };
        events.push(AssemblerEvent::Telemetry(telemetry));

        if let Some(last) = self.last_seq {
            let expected = last.wrapping_add(1);
            if p.seq != expected {
                events.push(AssemblerEvent::SequenceGap {
                    expected,
                    got: p.seq,
                });
                if let Some(cur) = self.current.take() {
                    events.push(AssemblerEvent::FrameInvalidated {
                        first_seq: cur.first_seq,
                        reason: InvalidReason::SequenceGap,
                    });
                }
            }
        }
        self.last_seq = Some(p.seq);

        let mut emitted = None;
        if p.flags.start_of_frame {
            if let Some(cur) = self.current.take() {
                if cur.packets == PACKETS_PER_FRAME && cur.pixels.len() == FRAME_BYTES {
                    emitted = Some(Frame {
                        width: FRAME_WIDTH,
                        height: FRAME_HEIGHT,
                        pixels: cur.pixels,
                        first_seq: cur.first_seq,
                        imu_trace: cur.telemetry,
                    });
                } else {
                    events.push(AssemblerEvent::FrameInvalidated {
                        first_seq: cur.first_seq,
                        reason: InvalidReason::WrongLength {
                            packets: cur.packets,
                        },
                    });
                }
            }
            self.current = Some(InProgress {
                first_seq: p.seq,
                pixels: Vec::with_capacity(FRAME_BYTES),
                packets: 0,
                telemetry: Vec::with_capacity(PACKETS_PER_FRAME),
            });
        }

        match self.current.as_mut() {
            Some(cur) => {
                cur.packets += 1;
                let room = FRAME_BYTES - cur.pixels.len();
                let take = room.min(p.camera_payload.len());
                cur.pixels.extend_from_slice(&p.camera_payload[..take]);
                cur.telemetry.push(telemetry);
            }
            None => events.push(AssemblerEvent::Discarded { seq: p.seq }),
        }
        (emitted, events)
    }

    /// Closes the stream. An open frame with every packet present is
    /// emitted; anything shorter is reported invalid.
    pub fn finish(&mut self) -> (Option<Frame>, Vec<AssemblerEvent>) {
        let mut events = Vec::new();
        let mut emitted = None;
        if let Some(cur) = self.current.take() {
            if cur.packets == PACKETS_PER_FRAME && cur.pixels.len() == FRAME_BYTES {
                emitted = Some(Frame {
                    width: FRAME_WIDTH,
                    height: FRAME_HEIGHT,
                    pixels: cur.pixels,
                    first_seq: cur.first_seq,
                    imu_trace: cur.telemetry,
                });
            } else {
                events.push(AssemblerEvent::FrameInvalidated {
                    first_seq: cur.first_seq,
                    reason: InvalidReason::WrongLength { packets: cur.packets },
                });
            }
        }
        self.last_seq = None;
        (emitted, events)
    }

    /// Drops any partial frame, e.g. when a connection closes.
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// Summary counters for a decoded packet stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssemblyReport {
    pub packets: usize,
    pub frames_ok: usize,
    pub frames_invalidated: usize,
    pub sequence_gaps: usize,
    pub imu_samples: usize,
    pub button_packets: usize,
    pub discarded: usize,
}

impl AssemblyReport {
    pub fn record(&mut self, frame: Option<&Frame>, events: &[AssemblerEvent]) {
        self.packets += 1;
        if frame.is_some() {
            self.frames_ok += 1;
        }
        for ev in events {
            match ev {
                AssemblerEvent::Telemetry(t) => {
                    self.imu_samples += t.imu.is_some() as usize;
                    self.button_packets += t.button as usize;
                }
                AssemblerEvent::SequenceGap { .. } => self.sequence_gaps += 1,
                AssemblerEvent::FrameInvalidated { .. } => self.frames_invalidated += 1,
                AssemblerEvent::Discarded { .. } => self.discarded += 1,
            }
        }
    }
}

/// Runs a whole packet stream through a fresh assembler.
pub fn assemble_all(packets: &[RingPacket]) -> (Vec<Frame>, AssemblyReport) {
    let mut asm = Assembler::new();
    let mut report = AssemblyReport::default();
    let mut frames = Vec::new();
    for p in packets {
        let (frame, events) = asm.push(p);
        report.record(frame.as_ref(), &events);
        frames.extend(frame);
    }
    (frames, report)
}

/// Like [`assemble_all`], but the end of input closes the last frame.
pub fn assemble_capture(packets: &[RingPacket]) -> (Vec<Frame>, AssemblyReport) {
    let mut asm = Assembler::new();
    let mut report = AssemblyReport::default();
    let mut frames = Vec::new();
    for p in packets {
        let (frame, events) = asm.push(p);
        report.record(frame.as_ref(), &events);
        frames.extend(frame);
    }
    let (frame, events) = asm.finish();
    report.frames_ok += frame.is_some() as usize;
    report.frames_invalidated += events.len();
    frames.extend(frame);
    (frames, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame_packets(frame_id: u8, seq_start: u8) -> Vec<RingPacket> {
        let pixels: Vec<u8> = (0..FRAME_BYTES)
            .map(|i| (i as u8).wrapping_mul(31) ^ frame_id)
            .collect();
        let mut out = Vec::new();
        for (k, chunk) in pixels.chunks(PAYLOAD_LEN).enumerate() {
            let mut payload = chunk.to_vec();
            payload.resize(PAYLOAD_LEN, 0);
            out.push(RingPacket {
                seq: seq_start.wrapping_add(k as u8),
                flags: StatusFlags {
                    start_of_frame: k == 0,
                    imu_valid: true,
                    button_pressed: false,
                },
                imu: ImuSample::default(),
                camera_payload: payload,
            });
        }
        out
    }

    #[test]
    fn capture_end_closes_complete_frame_only() {
        let mut pk = frame_packets(1, 0);
        pk.extend(frame_packets(2, PACKETS_PER_FRAME as u8));
        let (frames, report) = assemble_capture(&pk);
        assert_eq!(frames.len(), 2);
        assert_eq!(report.frames_invalidated, 0);
        pk.pop();
        let (frames, report) = assemble_capture(&pk);
        assert_eq!(frames.len(), 1);
        assert_eq!(report.frames_invalidated, 1);
        assert_eq!(assemble_all(&pk).0.len(), 1);
    }

    #[test]
    fn geometry_constants() {
        assert_eq!(PAYLOAD_LEN, 233);
        assert_eq!(PACKETS_PER_FRAME, 83);
        assert_eq!(LAST_PACKET_DATA, 94);
        assert_eq!(PAYLOAD_LEN - LAST_PACKET_DATA, 139);
    }

    #[test]
    fn zero_packet_encodes_to_zero_bytes() {
        let raw = encode_packet(&RingPacket::blank(0)).unwrap();
        assert_eq!(raw, [0u8; PACKET_LEN]);
        assert_eq!(decode_packet(&raw).unwrap(), RingPacket::blank(0));
    }

    #[test]
    fn sof_layout() {
        let mut p = RingPacket::blank(7);
        p.flags.start_of_frame = true;
        let raw = encode_packet(&p).unwrap();
        assert_eq!(raw[0], 0x07);
        assert_eq!(raw[1], 0x01);
        assert!(raw[2..].iter().all(|&b| b == 0));
    }

    #[test]
    fn imu_is_little_endian_accel_then_gyro() {
        let mut p = RingPacket::blank(0);
        p.imu = ImuSample {
            accel: [1, -2, 0x1234],
            gyro: [0, 0, -1],
        };
        let raw = encode_packet(&p).unwrap();
        assert_eq!(&raw[2..8], &[0x01, 0x00, 0xFE, 0xFF, 0x34, 0x12]);
        assert_eq!(&raw[12..14], &[0xFF, 0xFF]);
    }

    #[test]
    fn reserved_flag_bits_ignored_and_never_written() {
        let flags = StatusFlags::from_byte(0xFF);
        assert!(flags.start_of_frame && flags.imu_valid && flags.button_pressed);
        assert_eq!(flags.to_byte(), 0x07);
    }

    #[test]
    fn length_errors() {
        let mut p = RingPacket::blank(0);
        p.camera_payload.pop();
        assert_eq!(
            encode_packet(&p),
            Err(ProtocolError::PayloadLengthMismatch(232))
        );
        assert_eq!(
            decode_packet(&[0u8; 246]),
            Err(ProtocolError::TruncatedPacket(246))
        );
        assert_eq!(
            decode_packet(&[0u8; 248]),
            Err(ProtocolError::TruncatedPacket(248))
        );
    }

    #[test]
    fn accel_scale() {
        let s = ImuSample {
            accel: [8192, -8192, 0],
            gyro: [16384, 0, 0],
        };
        assert_eq!(s.accel_g(), [1.0, -1.0, 0.0]);
        assert_eq!(s.gyro_dps()[0], 1000.0);
        assert_eq!(ImuSample::accel_counts_from_g([1.0, -1.0, 9.0]), [8192, -8192, 32767]);
    }

    #[test]
    fn one_frame_then_sof_emits_frame() {
        let mut stream = frame_packets(1, 0);
        stream.push(frame_packets(2, 83).remove(0));
        let (frames, report) = assemble_all(&stream);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].first_seq, 0);
        assert_eq!(frames[0].pixels.len(), FRAME_BYTES);
        assert_eq!(frames[0].imu_trace.len(), 83);
        assert_eq!(report.frames_invalidated, 0);
        assert_eq!(report.imu_samples, 84);
    }

    #[test]
    fn dropped_packet_invalidates_frame() {
        let mut stream = frame_packets(1, 0);
        stream.remove(41);
        stream.push(frame_packets(2, 83).remove(0));
        let (frames, report) = assemble_all(&stream);
        assert!(frames.is_empty());
        assert_eq!(report.frames_invalidated, 1);
        assert_eq!(report.sequence_gaps, 1);
        // packets after the gap are not buffered until the next SOF
        assert_eq!(report.discarded, 82 - 41);
        assert_eq!(report.imu_samples, stream.len());
    }

    #[test]
    fn imu_events_survive_invalid_frames() {
        let mut stream = frame_packets(1, 0);
        stream.retain(|p| p.seq % 5 != 3);
        let (_, report) = assemble_all(&stream);
        assert_eq!(report.imu_samples, stream.len());
    }

    #[test]
    fn sequence_wrap_is_not_a_gap() {
        let mut stream = frame_packets(3, 250);
        stream.push(frame_packets(4, 250u8.wrapping_add(83)).remove(0));
        let (frames, report) = assemble_all(&stream);
        assert_eq!(report.sequence_gaps, 0);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].first_seq, 250);
    }

    #[test]
    fn stream_joined_mid_frame_is_discarded() {
        let mut stream = frame_packets(1, 0).split_off(10);
        stream.extend(frame_packets(2, 83));
        stream.push(frame_packets(3, 166).remove(0));
        let (frames, report) = assemble_all(&stream);
        assert_eq!(report.discarded, 73);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].first_seq, 83);
    }

    #[test]
    fn missing_sof_packet_makes_overlong_frame_invalid() {
        // Two frames back to back with seq continuity preserved but the second
        // SOF flag cleared: the first "frame" grows to 166 packets.
        let mut stream = frame_packets(1, 0);
        let mut second = frame_packets(2, 83);
        second[0].flags.start_of_frame = false;
        stream.extend(second);
        stream.push(frame_packets(3, 166).remove(0));
        let (frames, report) = assemble_all(&stream);
        assert!(frames.is_empty());
        assert_eq!(report.frames_invalidated, 1);
    }

    #[test]
    fn capture_round_trip_and_count_check() {
        let packets = frame_packets(9, 5);
        let mut buf = Vec::new();
        write_capture(&mut buf, &packets).unwrap();
        assert_eq!(buf.len(), 4 + 83 * PACKET_LEN);
        assert_eq!(&buf[..4], &83u32.to_le_bytes());
        assert_eq!(read_capture(&buf[..]).unwrap(), packets);
        buf.pop();
        assert!(matches!(
            read_capture(&buf[..]),
            Err(CaptureError::CountMismatch { declared: 83, .. })
        ));
    }

    fn arb_packet() -> impl Strategy<Value = RingPacket> {
        (
            any::<u8>(),
            0u8..8,
            any::<[i16; 3]>(),
            any::<[i16; 3]>(),
            proptest::collection::vec(any::<u8>(), PAYLOAD_LEN),
        )
            .prop_map(|(seq, flags, accel, gyro, payload)| RingPacket {
                seq,
                flags: StatusFlags::from_byte(flags),
                imu: ImuSample { accel, gyro },
                camera_payload: payload,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn codec_round_trip(p in arb_packet()) {
            let raw = encode_packet(&p).unwrap();
            prop_assert_eq!(raw.len(), PACKET_LEN);
            prop_assert_eq!(raw[1] & 0xF8, 0);
            prop_assert_eq!(decode_packet(&raw).unwrap(), p);
        }
    }
}
