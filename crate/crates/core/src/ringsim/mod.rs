//! Deterministic model of the ring hardware.

mod camera;
mod device;
mod link;
mod power;
mod trace;

pub use camera::{bin_image, qvga_window, SENSOR_SIZE, WINDOW_HEIGHT, WINDOW_TOP};
pub use device::{run_ring, NetworkChange, RingConfig, RingRun, StateChange, TimedPacket};
pub use link::{pace_schedule, packetize_frame, LinkConfig};
pub use power::{
    energy_used, fsm_step, Action, FsmContext, PowerFsm, PowerProfile, PowerState, SimEvent,
    SimEventKind, ACTIVE_TIMEOUT_MS,
};
pub use trace::{read_imu_trace, write_imu_trace, ImuTraceRow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("expected a 320x320 sensor image, got {width}x{height}")]
    BadDimensions { width: usize, height: usize },
    #[error("{0} IMU samples do not fit in one frame's packets")]
    TooManyImuSamples(usize),
    #[error("invalid power profile: {0}")]
    InvalidProfile(String),
    #[error("invalid link configuration {0:?}")]
    InvalidLink(LinkConfig),
    #[error("IMU trace: {0}")]
    Trace(String),
    #[error("IMU trace is not sorted by time at row {row}")]
    UnsortedTrace { row: usize },
    #[error("scene source: {0}")]
    Scene(String),
}
