//! Closed-form throughput, latency and battery-life calculators.

use std::fmt::Write as _;

use thiserror::Error;

use crate::ringsim::{LinkConfig, PowerProfile, PowerState};

/// Awake time charged to one gesture.
pub const GESTURE_ACTIVE_S: f64 = 3.0;
pub const MAX_GESTURES_PER_HOUR: u32 = 1200;

#[derive(Debug, Error, PartialEq)]
pub enum BudgetError {
    #[error("gesture rate {0}/h outside 0..=1200")]
    InvalidGestureRate(u32),
    #[error("sleep fraction {0} outside [0, 1)")]
    InvalidSleepFraction(f64),
    #[error("partition of {partition} entries exceeds database of {db_size}")]
    InvalidPartition { db_size: usize, partition: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Effective link throughput in bits per second, floored.
pub fn ble_throughput(link: &LinkConfig) -> u64 {
    let bits = 1000.0 * link.packets_per_interval as f64 * link.packet_size_bytes as f64 * 8.0;
    (bits / link.connection_interval_ms).floor() as u64
}

/// Time to move one `width x height` image over the link.
pub fn frame_latency_ms(width: u32, height: u32, bits_per_px: u32, link: &LinkConfig) -> f64 {
    let bits = width as f64 * height as f64 * bits_per_px as f64;
    bits / ble_throughput(link) as f64 * 1000.0
}

pub fn frame_rate_fps(width: u32, height: u32, bits_per_px: u32, link: &LinkConfig) -> f64 {
    1000.0 / frame_latency_ms(width, height, bits_per_px, link)
}

/// Piecewise-linear query time over database size, extrapolated past the
/// end points and clamped at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryTimeModel {
    points: Vec<(f64, f64)>,
}

impl Default for QueryTimeModel {
    fn default() -> Self {
        Self {
            points: vec![(4.0, 9.0), (50.0, 244.0), (100.0, 423.0)],
        }
    }
}

impl QueryTimeModel {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self, BudgetError> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.len() < 2 {
            return Err(BudgetError::InvalidInput("query model needs two points".into()));
        }
        if points.windows(2).any(|w| w[0].0 == w[1].0)
            || points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite() || p.1 < 0.0)
        {
            return Err(BudgetError::InvalidInput("query model points must be distinct and nonnegative".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn query_ms(&self, n: usize) -> f64 {
        let x = n as f64;
        let p = &self.points;
        let seg = p
            .windows(2)
            .position(|w| x <= w[1].0)
            .unwrap_or(p.len() - 2);
        let ((x0, y0), (x1, y1)) = (p[seg], p[seg + 1]);
        (y0 + (x - x0) * (y1 - y0) / (x1 - x0)).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyProfile {
    pub hardware_ms: f64,
    pub yolo_ms: f64,
    pub embed_gen_ms: f64,
    pub query: QueryTimeModel,
}

impl Default for LatencyProfile {
    fn default() -> Self {
        Self {
            hardware_ms: 293.0,
            yolo_ms: 28.0,
            embed_gen_ms: 8.0,
            query: QueryTimeModel::default(),
        }
    }
}

impl LatencyProfile {
    pub fn fixed_ms(&self) -> f64 {
        self.hardware_ms + self.yolo_ms + self.embed_gen_ms
    }
}

/// Gesture-to-command latency. With scoping only the class partition is
/// searched.
pub fn e2e_latency_ms(
    profile: &LatencyProfile,
    db_size: usize,
    use_class_scoping: bool,
    class_partition_size: usize,
) -> Result<f64, BudgetError> {
    if class_partition_size > db_size {
        return Err(BudgetError::InvalidPartition {
            db_size,
            partition: class_partition_size,
        });
    }
    let n = if use_class_scoping { class_partition_size } else { db_size };
    Ok(profile.fixed_ms() + profile.query.query_ms(n))
}

/// Mean current while awake at home, in mA.
pub fn awake_current_ma(gestures_per_hour: u32, profile: &PowerProfile) -> Result<f64, BudgetError> {
    if gestures_per_hour > MAX_GESTURES_PER_HOUR {
        return Err(BudgetError::InvalidGestureRate(gestures_per_hour));
    }
    let active_s = gestures_per_hour as f64 * GESTURE_ACTIVE_S;
    let active = profile.current_ma(PowerState::Active);
    let idle = profile.current_ma(PowerState::Idle);
    Ok((active_s * active + (3600.0 - active_s) * idle) / 3600.0)
}

pub fn battery_life_hours(
    gestures_per_hour: u32,
    profile: &PowerProfile,
    sleep_fraction: f64,
) -> Result<f64, BudgetError> {
    if !(0.0..1.0).contains(&sleep_fraction) {
        return Err(BudgetError::InvalidSleepFraction(sleep_fraction));
    }
    let awake = awake_current_ma(gestures_per_hour, profile)?;
    let blended = (1.0 - sleep_fraction) * awake + sleep_fraction * profile.current_ma(PowerState::Sleep);
    Ok(profile.battery_mah / blended)
}

pub fn throughput_table(link: &LinkConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<24} {:>14} {:>14}", "quantity", "computed", "reference");
    let _ = writeln!(s, "{:<24} {:>14} {:>14}", "throughput_bps", ble_throughput(link), 526933);
    for (w, h, ref_ms, ref_fps) in [(320, 320, 1562.5, 0.64), (160, 120, 290.0, 3.43)] {
        let ms = frame_latency_ms(w, h, 8, link);
        let fps = frame_rate_fps(w, h, 8, link);
        let _ = writeln!(s, "{:<24} {:>14.3} {:>14.1}", format!("latency_ms {w}x{h}"), ms, ref_ms);
        let _ = writeln!(s, "{:<24} {:>14.3} {:>14.2}", format!("fps {w}x{h}"), fps, ref_fps);
    }
    s
}

pub fn latency_table(profile: &LatencyProfile) -> String {
    let mut s = String::new();
    let sizes = [4usize, 50, 100];
    let reference = [338.0, 573.0, 752.0];
    let _ = writeln!(s, "{:<22} {:>10} {:>10} {:>10}", "db_size", sizes[0], sizes[1], sizes[2]);
    let row = |s: &mut String, name: &str, f: &dyn Fn(usize) -> f64| {
        let v: Vec<String> = sizes.iter().map(|&n| format!("{:>10.1}", f(n))).collect();
        let _ = writeln!(s, "{:<22} {}", name, v.join(" "));
    };
    row(&mut s, "hardware_ms", &|_| profile.hardware_ms);
    row(&mut s, "yolo_ms", &|_| profile.yolo_ms);
    row(&mut s, "embed_gen_ms", &|_| profile.embed_gen_ms);
    row(&mut s, "query_ms", &|n| profile.query.query_ms(n));
    row(&mut s, "total_ms", &|n| e2e_latency_ms(profile, n, false, 0).expect("partition 0 is valid"));
    row(&mut s, "reference_total_ms", &|n| reference[sizes.iter().position(|&m| m == n).unwrap()]);
    s
}

pub fn battery_table(profile: &PowerProfile, sleep_fraction: f64) -> Result<String, BudgetError> {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>10} {:>10} {:>14} {:>14}",
        "gestures/h",
        "hours",
        "reference",
        format!("hours@{sleep_fraction}"),
        "reference"
    );
    for (n, r0, r1) in [(10, 16.6, 32.9), (30, 15.9, 31.5), (60, 14.9, 29.5)] {
        let h0 = battery_life_hours(n, profile, 0.0)?;
        let h1 = battery_life_hours(n, profile, sleep_fraction)?;
        let _ = writeln!(s, "{:<12} {:>10.2} {:>10.1} {:>14.2} {:>14.1}", n, h0, r0, h1, r1);
    }
    Ok(s)
}
