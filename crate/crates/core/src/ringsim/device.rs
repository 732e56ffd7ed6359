//! Discrete-event run of the ring: power FSM, camera capture and packet
//! pacing driven by an IMU/button trace.

use std::collections::VecDeque;

use crate::image::GrayImage;
use crate::protocol::{Frame, ImuSample, RingPacket};

use super::{
    bin_image, packetize_frame, Action, ImuTraceRow, LinkConfig, PowerFsm, PowerProfile,
    PowerState, SimError, SimEvent, SimEventKind,
};

/// Depth of the ring's IMU FIFO; older samples are overwritten.
const IMU_FIFO_DEPTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingConfig {
    pub link: LinkConfig,
    pub profile: PowerProfile,
    /// While asleep the ring only checks for the home network on this period.
    pub wake_period_ms: f64,
}

impl Default for RingConfig {
    fn default() -> Self {
        Self {
            link: LinkConfig::default(),
            profile: PowerProfile::default(),
            wake_period_ms: 30_000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkChange {
    pub t_ms: f64,
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedPacket {
    pub t_ms: f64,
    /// Index of the captured frame this packet belongs to.
    pub frame_index: usize,
    pub packet: RingPacket,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateChange {
    pub t_ms: f64,
    pub state: PowerState,
}

#[derive(Debug, Clone)]
pub struct RingRun {
    pub packets: Vec<TimedPacket>,
    pub state_changes: Vec<StateChange>,
    pub segments: Vec<(PowerState, f64)>,
    pub frames_started: usize,
    pub end_ms: f64,
}

impl RingRun {
    pub fn energy_mah(&self, profile: &PowerProfile) -> f64 {
        super::energy_used(&self.segments, profile)
    }
}

struct Stream {
    frame_start_ms: f64,
    frame_index: usize,
    packets: Vec<RingPacket>,
    offsets: Vec<f64>,
    next: usize,
}

enum Input {
    Network(bool),
    Row(ImuTraceRow),
}

/// Runs the ring from `t = 0` (asleep) until the trace is exhausted and
/// streaming has stopped, or until `end_ms` if given.
///
/// `capture` returns the 320x320 sensor image visible at a given time.
pub fn run_ring(
    cfg: &RingConfig,
    trace: &[ImuTraceRow],
    network: &[NetworkChange],
    end_ms: Option<f64>,
    capture: &mut dyn FnMut(f64) -> Result<GrayImage, SimError>,
) -> Result<RingRun, SimError> {
    cfg.link.validate()?;
    cfg.profile.validate()?;
    if let Some(i) = trace.windows(2).position(|w| w[0].t_ms > w[1].t_ms) {
        return Err(SimError::UnsortedTrace { row: i + 1 });
    }

    let mut inputs: Vec<(f64, Input)> = Vec::new();
    for n in network {
        inputs.push((n.t_ms, Input::Network(n.present)));
    }
    for r in trace {
        inputs.push((r.t_ms, Input::Row(*r)));
    }
    // network changes sort ahead of rows at the same instant
    inputs.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then_with(|| {
            let rank = |i: &Input| matches!(i, Input::Row(_)) as u8;
            rank(&a.1).cmp(&rank(&b.1))
        })
    });
    let mut inputs = VecDeque::from(inputs);

    let mut fsm = PowerFsm::new(PowerState::Sleep, 0.0);
    let mut state_changes = vec![StateChange {
        t_ms: 0.0,
        state: PowerState::Sleep,
    }];
    let mut packets_out = Vec::new();
    let mut stream: Option<Stream> = None;
    let mut imu_fifo: VecDeque<ImuSample> = VecDeque::new();
    let mut seq: u8 = 0;
    let mut button = false;
    let mut frames_started = 0usize;
    let mut now = 0.0f64;
    let horizon = end_ms.unwrap_or(f64::INFINITY);

    let frame_period = cfg.link.frame_period_ms();
    let offsets = super::pace_schedule(crate::protocol::PACKETS_PER_FRAME, &cfg.link);

    let start_frame = |t: f64,
                           index: usize,
                           seq: u8,
                           capture: &mut dyn FnMut(f64) -> Result<GrayImage, SimError>|
     -> Result<Stream, SimError> {
        let raw = capture(t)?;
        let binned = bin_image(&raw)?;
        let frame = Frame::from_image(&binned).map_err(|e| SimError::Scene(e.to_string()))?;
        Ok(Stream {
            frame_start_ms: t,
            frame_index: index,
            packets: packetize_frame(&frame, seq, false, &[])?,
            offsets: offsets.clone(),
            next: 0,
        })
    };

    loop {
        let next_packet_t = stream
            .as_ref()
            .map(|s| s.frame_start_ms + s.offsets[s.next]);
        let next_input_t = inputs
            .front()
            .map(|(t, input)| effective_input_time(*t, input, fsm.state(), cfg));

        let take_input = match (next_input_t, next_packet_t) {
            (None, None) => break,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(ti), Some(tp)) => ti <= tp,
        };
        let t = if take_input {
            next_input_t.unwrap()
        } else {
            next_packet_t.unwrap()
        };
        if t > horizon {
            break;
        }
        now = t;

        let mut actions = Vec::new();
        if take_input {
            let (_, input) = inputs.pop_front().expect("front checked above");
            match input {
                Input::Network(present) => {
                    let kind = if present {
                        SimEventKind::HomeNetworkDetected
                    } else {
                        SimEventKind::HomeNetworkLost
                    };
                    actions.extend(fsm.step(&SimEvent::new(t, kind)));
                }
                Input::Row(row) => {
                    if row.button != button {
                        button = row.button;
                        let kind = if button {
                            SimEventKind::ButtonDown
                        } else {
                            SimEventKind::ButtonUp
                        };
                        actions.extend(fsm.step(&SimEvent::new(t, kind)));
                    }
                    actions.extend(fsm.step(&SimEvent::new(t, SimEventKind::Tick)));
                    // the IMU is suspended outside ACTIVE
                    if fsm.state() == PowerState::Active {
                        if imu_fifo.len() == IMU_FIFO_DEPTH {
                            imu_fifo.pop_front();
                        }
                        imu_fifo.push_back(row.sample());
                    }
                }
            }
        } else {
            actions.extend(fsm.step(&SimEvent::new(t, SimEventKind::Tick)));
        }

        for a in &actions {
            match a {
                Action::StartStreaming => {
                    stream = Some(start_frame(t, frames_started, seq, capture)?);
                    frames_started += 1;
                }
                Action::StopStreaming => {
                    stream = None;
                    imu_fifo.clear();
                }
            }
        }
        if state_changes.last().map(|s| s.state) != Some(fsm.state()) {
            state_changes.push(StateChange {
                t_ms: t,
                state: fsm.state(),
            });
        }

        if !take_input {
            let Some(s) = stream.as_mut() else { continue };
            let mut p = s.packets[s.next].clone();
            p.seq = seq;
            p.flags.button_pressed = button;
            if let Some(sample) = imu_fifo.pop_front() {
                p.flags.imu_valid = true;
                p.imu = sample;
            }
            packets_out.push(TimedPacket {
                t_ms: t,
                frame_index: s.frame_index,
                packet: p,
            });
            seq = seq.wrapping_add(1);
            s.next += 1;
            if s.next == s.packets.len() {
                let next_start = s.frame_start_ms + frame_period;
                stream = Some(start_frame(next_start, frames_started, seq, capture)?);
                frames_started += 1;
            }
        }
    }

    let end = end_ms.unwrap_or(now);
    Ok(RingRun {
        packets: packets_out,
        segments: fsm.segments_until(end),
        state_changes,
        frames_started,
        end_ms: end,
    })
}

// A home network appearing while asleep is only noticed at the next wake tick.
fn effective_input_time(t: f64, input: &Input, state: PowerState, cfg: &RingConfig) -> f64 {
    match input {
        Input::Network(true) if state == PowerState::Sleep && cfg.wake_period_ms > 0.0 => {
            (t / cfg.wake_period_ms).ceil() * cfg.wake_period_ms
        }
        _ => t,
    }
}
