//! Frame packetisation and connection-interval pacing.

use serde::{Deserialize, Serialize};

use crate::protocol::{
    Frame, ImuSample, RingPacket, StatusFlags, FRAME_BYTES, PACKETS_PER_FRAME, PAYLOAD_LEN,
};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub connection_interval_ms: f64,
    pub packets_per_interval: u32,
    pub packet_size_bytes: u32,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            connection_interval_ms: 15.0,
            packets_per_interval: 4,
            packet_size_bytes: 247,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.connection_interval_ms.is_finite() && self.connection_interval_ms > 0.0)
            || self.packets_per_interval == 0
            || self.packet_size_bytes == 0
        {
            return Err(SimError::InvalidLink(*self));
        }
        Ok(())
    }

    /// Time from the first packet of a frame to the first packet of the next
    /// when frames are streamed back to back.
    pub fn frame_period_ms(&self) -> f64 {
        let intervals = PACKETS_PER_FRAME.div_ceil(self.packets_per_interval as usize);
        intervals as f64 * self.connection_interval_ms
    }
}

/// Splits a frame into 83 packets. The first carries start-of-frame, the
/// last is zero-padded. IMU samples go to the leading packets in order.
pub fn packetize_frame(
    frame: &Frame,
    seq_start: u8,
    button: bool,
    imu: &[ImuSample],
) -> Result<Vec<RingPacket>, SimError> {
    if imu.len() > PACKETS_PER_FRAME {
        return Err(SimError::TooManyImuSamples(imu.len()));
    }
    debug_assert_eq!(frame.pixels.len(), FRAME_BYTES);
    Ok(frame
        .pixels
        .chunks(PAYLOAD_LEN)
        .enumerate()
        .map(|(k, chunk)| {
            let mut payload = chunk.to_vec();
            payload.resize(PAYLOAD_LEN, 0);
            RingPacket {
                seq: seq_start.wrapping_add(k as u8),
                flags: StatusFlags {
                    start_of_frame: k == 0,
                    imu_valid: k < imu.len(),
                    button_pressed: button,
                },
                imu: imu.get(k).copied().unwrap_or_default(),
                camera_payload: payload,
            }
        })
        .collect())
}

/// Send time of each packet: the k-th group of `packets_per_interval`
/// packets goes out at the start of interval k.
pub fn pace_schedule(n_packets: usize, link: &LinkConfig) -> Vec<f64> {
    let per = link.packets_per_interval.max(1) as usize;
    (0..n_packets)
        .map(|i| (i / per) as f64 * link.connection_interval_ms)
        .collect()
}
