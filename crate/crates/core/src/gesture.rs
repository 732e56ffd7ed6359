//! Button + accelerometer gesture recognition.
//!
//! Two gestures are recognised from the ring's single button: a short press
//! (click, or double-click when two land close together) and press-and-hold,
//! during which wrist roll is reported as quantised rotation steps.
//!
//! Roll comes from the accelerometer alone: `atan2(lateral, normal)` in
//! degrees, shifted by +90 and clamped to `[0, 180]`. A running difference of
//! that value, with the sub-step remainder carried forward, becomes
//! `RotateDelta` events.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ringsim::ImuTraceRow;

/// Below this acceleration magnitude (in g) gravity no longer dominates and
/// the tilt estimate is not trusted.
pub const MIN_TILT_MAGNITUDE_G: f64 = 0.25;

const QUANTUM_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum GestureError {
    #[error("acceleration magnitude {0:.3} g too small for a tilt estimate")]
    LowConfidence(f64),
    #[error("invalid gesture config: {0}")]
    InvalidConfig(&'static str),
}

/// One accelerometer axis, optionally sign-flipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisRef {
    pub index: usize,
    pub invert: bool,
}

impl AxisRef {
    pub const fn new(index: usize) -> Self {
        Self {
            index,
            invert: false,
        }
    }

    fn read(&self, a: [f64; 3]) -> f64 {
        let v = a[self.index];
        if self.invert {
            -v
        } else {
            v
        }
    }
}

/// Which accelerometer axes measure roll about the wrist. The default
/// assumes y lateral and z normal to the palm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TiltAxes {
    pub lateral: AxisRef,
    pub normal: AxisRef,
}

impl Default for TiltAxes {
    fn default() -> Self {
        Self {
            lateral: AxisRef::new(1),
            normal: AxisRef::new(2),
        }
    }
}

impl TiltAxes {
    pub fn tilt_degrees(&self, accel_g: [f64; 3]) -> Result<f64, GestureError> {
        let mag = accel_g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if mag.is_nan() || mag <= MIN_TILT_MAGNITUDE_G {
            return Err(GestureError::LowConfidence(mag));
        }
        let raw = self
            .lateral
            .read(accel_g)
            .atan2(self.normal.read(accel_g))
            .to_degrees();
        Ok((raw + 90.0).clamp(0.0, 180.0))
    }
}

/// Scaled tilt in `[0, 180]` with the default axis convention.
pub fn tilt_degrees(accel_g: [f64; 3]) -> Result<f64, GestureError> {
    TiltAxes::default().tilt_degrees(accel_g)
}

/// Linear map from a rotation in degrees to a control increment: a half
/// turn (180 degrees) sweeps the whole range.
pub fn map_rotation(delta_deg: f64, range: (f64, f64)) -> f64 {
    delta_deg / 180.0 * (range.1 - range.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GestureConfig {
    pub hold_threshold_ms: f64,
    pub double_click_window_ms: f64,
    pub rotate_step_deg: f64,
    /// Presses shorter than this are contact bounce and ignored.
    pub debounce_ms: f64,
    pub axes: TiltAxes,
}

impl Default for GestureConfig {
    fn default() -> Self {
        Self {
            hold_threshold_ms: 500.0,
            double_click_window_ms: 400.0,
            rotate_step_deg: 1.8,
            debounce_ms: 20.0,
            axes: TiltAxes::default(),
        }
    }
}

impl GestureConfig {
    pub fn validate(&self) -> Result<(), GestureError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.hold_threshold_ms)
            || !positive(self.double_click_window_ms)
            || !positive(self.rotate_step_deg)
        {
            return Err(GestureError::InvalidConfig("timings and step must be > 0"));
        }
        if !(self.debounce_ms >= 0.0 && self.double_click_window_ms > self.debounce_ms) {
            return Err(GestureError::InvalidConfig(
                "double-click window must exceed debounce",
            ));
        }
        if self.axes.lateral.index > 2 || self.axes.normal.index > 2 {
            return Err(GestureError::InvalidConfig("axis index must be 0..=2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GestureKind {
    Click,
    DoubleClick,
    HoldStart,
    RotateDelta(f64),
    HoldEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureEvent {
    pub t_ms: f64,
    pub kind: GestureKind,
}

impl fmt::Display for GestureEvent {
    /// `t_ms EVENT [value]`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GestureKind::Click => write!(f, "{} Click", self.t_ms),
            GestureKind::DoubleClick => write!(f, "{} DoubleClick", self.t_ms),
            GestureKind::HoldStart => write!(f, "{} HoldStart", self.t_ms),
            GestureKind::RotateDelta(d) => write!(f, "{} RotateDelta {}", self.t_ms, d),
            GestureKind::HoldEnd => write!(f, "{} HoldEnd", self.t_ms),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Press {
    down_ms: f64,
    /// Second press of a potential double-click.
    second: bool,
}

/// Incremental recogniser; feed samples in time order.
#[derive(Debug, Clone)]
pub struct GestureRecognizer {
    cfg: GestureConfig,
    press: Option<Press>,
    holding: bool,
    /// Release time of a click withheld while waiting for a second press.
    pending_click: Option<f64>,
    tilt: Option<f64>,
    rotate_acc: f64,
    last_t: f64,
}

impl GestureRecognizer {
    pub fn new(cfg: GestureConfig) -> Result<Self, GestureError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            press: None,
            holding: false,
            pending_click: None,
            tilt: None,
            rotate_acc: 0.0,
            last_t: f64::NEG_INFINITY,
        })
    }

    pub fn config(&self) -> &GestureConfig {
        &self.cfg
    }

    /// Last trusted tilt, if any.
    pub fn tilt(&self) -> Option<f64> {
        self.tilt
    }

    /// Processes one sample. `accel_g` is `None` for packets without IMU data.
    pub fn process_sample(
        &mut self,
        t_ms: f64,
        button: bool,
        accel_g: Option<[f64; 3]>,
    ) -> Vec<GestureEvent> {
        let mut out = Vec::new();
        let t = t_ms.max(self.last_t);
        self.last_t = t;

        if let Some(a) = accel_g {
            if let Ok(new_tilt) = self.cfg.axes.tilt_degrees(a) {
                if let (Some(old), Some(_)) = (self.tilt, self.press) {
                    self.rotate_acc += new_tilt - old;
                }
                self.tilt = Some(new_tilt);
            }
        }

        // a second press already inside the window is settled on release
        if let (Some(released), None) = (self.pending_click, self.press) {
            if t - released > self.cfg.double_click_window_ms {
                self.pending_click = None;
                out.push(self.event(t, GestureKind::Click));
            }
        }

        match (self.press, button) {
            (None, true) => {
                self.press = Some(Press {
                    down_ms: t,
                    second: self.pending_click.is_some(),
                });
                self.rotate_acc = 0.0;
            }
            (Some(p), true) => {
                if !self.holding && t - p.down_ms >= self.cfg.hold_threshold_ms {
                    self.begin_hold(t, &mut out);
                }
                if self.holding {
                    self.emit_rotation(t, &mut out);
                }
            }
            (Some(p), false) => {
                self.press = None;
                let held = t - p.down_ms;
                if !self.holding && held >= self.cfg.hold_threshold_ms {
                    // too few samples to see the hold begin
                    self.begin_hold(t, &mut out);
                }
                if self.holding {
                    self.emit_rotation(t, &mut out);
                    self.holding = false;
                    out.push(self.event(t, GestureKind::HoldEnd));
                } else if held < self.cfg.debounce_ms {
                    // bounce: a pending first click, if any, stays pending
                } else if p.second && self.pending_click.is_some() {
                    self.pending_click = None;
                    out.push(self.event(t, GestureKind::DoubleClick));
                } else {
                    self.pending_click = Some(t);
                }
                self.rotate_acc = 0.0;
            }
            (None, false) => {}
        }
        out
    }

    /// Flushes state at end of input: a withheld click is emitted once its
    /// window has lapsed, and an open hold is closed.
    pub fn finish(&mut self) -> Vec<GestureEvent> {
        let mut out = Vec::new();
        if let Some(released) = self.pending_click.take() {
            let t = (released + self.cfg.double_click_window_ms).max(self.last_t);
            out.push(self.event(t, GestureKind::Click));
        }
        if self.holding {
            self.holding = false;
            self.press = None;
            out.push(self.event(self.last_t, GestureKind::HoldEnd));
        }
        out
    }

    fn begin_hold(&mut self, t: f64, out: &mut Vec<GestureEvent>) {
        if self.pending_click.take().is_some() {
            out.push(self.event(t, GestureKind::Click));
        }
        self.holding = true;
        out.push(self.event(t, GestureKind::HoldStart));
    }

    fn emit_rotation(&mut self, t: f64, out: &mut Vec<GestureEvent>) {
        let step = self.cfg.rotate_step_deg;
        while self.rotate_acc >= step - QUANTUM_EPS {
            self.rotate_acc -= step;
            out.push(self.event(t, GestureKind::RotateDelta(step)));
        }
        while self.rotate_acc <= -step + QUANTUM_EPS {
            self.rotate_acc += step;
            out.push(self.event(t, GestureKind::RotateDelta(-step)));
        }
    }

    fn event(&self, t_ms: f64, kind: GestureKind) -> GestureEvent {
        GestureEvent { t_ms, kind }
    }
}

/// Runs a whole IMU trace through a fresh recogniser.
pub fn recognize_trace(
    rows: &[ImuTraceRow],
    cfg: GestureConfig,
) -> Result<Vec<GestureEvent>, GestureError> {
    let mut rec = GestureRecognizer::new(cfg)?;
    let mut out = Vec::new();
    for r in rows {
        out.extend(rec.process_sample(r.t_ms, r.button, Some(r.sample().accel_g())));
    }
    out.extend(rec.finish());
    Ok(out)
}
