//! Object detection interface and centered-object selection (CODA).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::Frame;

/// Horizontal field of view of the ring camera, in degrees.
pub const DEFAULT_FOV_DEG: f64 = 87.0;
/// Horizontal resolution after binning.
pub const DEFAULT_RES_PX: f64 = 160.0;

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("unknown device class {0:?}")]
    UnknownClass(String),
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("scene file: {0}")]
    Scene(#[from] serde_json::Error),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum DeviceClass {
    Lights,
    Speaker,
    SmartLock,
    Tv,
    Blinds,
    Door,
    DoorHandle,
    Window,
    Background,
}

impl DeviceClass {
    pub const ALL: [DeviceClass; 9] = [
        DeviceClass::Lights,
        DeviceClass::Speaker,
        DeviceClass::SmartLock,
        DeviceClass::Tv,
        DeviceClass::Blinds,
        DeviceClass::Door,
        DeviceClass::DoorHandle,
        DeviceClass::Window,
        DeviceClass::Background,
    ];

    /// Classes a user can register and control.
    pub const CONTROLLABLE: [DeviceClass; 5] = [
        DeviceClass::Lights,
        DeviceClass::Speaker,
        DeviceClass::SmartLock,
        DeviceClass::Tv,
        DeviceClass::Blinds,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_controllable(self) -> bool {
        Self::CONTROLLABLE.contains(&self)
    }

    /// Door, DoorHandle and Window help localise or reject detections but
    /// are not devices themselves.
    pub fn is_auxiliary(self) -> bool {
        matches!(self, DeviceClass::Door | DeviceClass::DoorHandle | DeviceClass::Window)
    }

    pub fn name(self) -> &'static str {
        match self {
            DeviceClass::Lights => "Lights",
            DeviceClass::Speaker => "Speaker",
            DeviceClass::SmartLock => "SmartLock",
            DeviceClass::Tv => "Tv",
            DeviceClass::Blinds => "Blinds",
            DeviceClass::Door => "Door",
            DeviceClass::DoorHandle => "DoorHandle",
            DeviceClass::Window => "Window",
            DeviceClass::Background => "Background",
        }
    }
}

impl fmt::Display for DeviceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeviceClass {
    type Err = PerceptionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().to_ascii_lowercase() == norm)
            .or(match norm.as_str() {
                "light" => Some(DeviceClass::Lights),
                "lock" => Some(DeviceClass::SmartLock),
                "television" => Some(DeviceClass::Tv),
                "blind" => Some(DeviceClass::Blinds),
                _ => None,
            })
            .ok_or_else(|| PerceptionError::UnknownClass(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    #[serde(rename = "class")]
    pub class_id: DeviceClass,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
}

impl BoundingBox {
    pub fn new(class_id: DeviceClass, cx: f64, cy: f64, w: f64, h: f64, confidence: f64) -> Self {
        Self {
            class_id,
            cx,
            cy,
            w,
            h,
            confidence,
        }
    }

    pub fn validate(&self, image_w: f64, image_h: f64) -> Result<(), PerceptionError> {
        let ok = self.w > 0.0
            && self.h > 0.0
            && (0.0..=image_w).contains(&self.cx)
            && (0.0..=image_h).contains(&self.cy)
            && (0.0..=1.0).contains(&self.confidence);
        if ok {
            Ok(())
        } else {
            Err(PerceptionError::InvalidBox(format!("{self:?}")))
        }
    }

    pub fn center_distance(&self, image_w: f64, image_h: f64) -> f64 {
        (self.cx - image_w / 2.0).hypot(self.cy - image_h / 2.0)
    }
}

/// Object detector over assembled frames.
pub trait Detector {
    fn detect(&mut self, frame: &Frame) -> Vec<BoundingBox>;
}

/// Index of the non-background box whose center is closest to the image
/// center. Equal distances prefer higher confidence, then the earlier box.
pub fn coda_index(boxes: &[BoundingBox], image_w: f64, image_h: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, b) in boxes.iter().enumerate() {
        if b.class_id == DeviceClass::Background {
            continue;
        }
        let d = b.center_distance(image_w, image_h);
        let better = match best {
            None => true,
            Some((j, bd)) => d < bd || (d == bd && b.confidence > boxes[j].confidence),
        };
        if better {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

pub fn coda(boxes: &[BoundingBox], image_w: f64, image_h: f64) -> Option<BoundingBox> {
    coda_index(boxes, image_w, image_h).map(|i| boxes[i])
}

/// Converts a pixel offset into an angular offset given the horizontal field
/// of view and resolution: `(dx, dy) * fov / res`.
pub fn angular_error(dx_px: f64, dy_px: f64, fov_deg: f64, res_px: f64) -> (f64, f64) {
    let per_px = fov_deg / res_px;
    (dx_px * per_px, dy_px * per_px)
}

/// Ground-truth placements for the synthetic detector; JSON
/// `{"boxes": [{"class": "Lights", "cx": .., "cy": .., "w": .., "h": .., "confidence": ..}]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub boxes: Vec<BoundingBox>,
}

impl SyntheticScene {
    pub fn from_json(s: &str) -> Result<Self, PerceptionError> {
        let scene: Self = serde_json::from_str(s)?;
        for b in &scene.boxes {
            b.validate(crate::protocol::FRAME_WIDTH as f64, crate::protocol::FRAME_HEIGHT as f64)?;
        }
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialises")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Jitter {
    /// Standard deviation of center noise, in pixels.
    pub center_sigma_px: f64,
    /// Probability that each box is dropped.
    pub drop_probability: f64,
}

/// Returns a scenario's boxes, optionally perturbed by seeded jitter.
pub fn synthetic_detect(
    frame: &Frame,
    scene: &SyntheticScene,
    jitter: Jitter,
    rng: &mut impl Rng,
) -> Vec<BoundingBox> {
    let (w, h) = (frame.width as f64, frame.height as f64);
    let noise = (jitter.center_sigma_px > 0.0)
        .then(|| Normal::new(0.0, jitter.center_sigma_px).expect("sigma is finite and > 0"));
    scene
        .boxes
        .iter()
        .filter_map(|b| {
            if jitter.drop_probability > 0.0 && rng.random::<f64>() < jitter.drop_probability {
                return None;
            }
            let mut out = *b;
            if let Some(n) = &noise {
                out.cx = (out.cx + n.sample(rng)).clamp(0.0, w);
                out.cy = (out.cy + n.sample(rng)).clamp(0.0, h);
            }
            Some(out)
        })
        .collect()
}

/// Fixed-scene detector.
#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    scene: SyntheticScene,
    jitter: Jitter,
    rng: ChaCha8Rng,
}

impl SyntheticDetector {
    pub fn new(scene: SyntheticScene, jitter: Jitter, seed: u64) -> Self {
        Self {
            scene,
            jitter,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Detector for SyntheticDetector {
    fn detect(&mut self, frame: &Frame) -> Vec<BoundingBox> {
        synthetic_detect(frame, &self.scene, self.jitter, &mut self.rng)
    }
}

/// Detector that recognises known frames by exact pixel content and returns
/// the scene registered for each. Unknown frames yield no boxes.
#[derive(Debug, Clone)]
pub struct FrameKeyedDetector {
    scenes: HashMap<Vec<u8>, SyntheticScene>,
    jitter: Jitter,
    rng: ChaCha8Rng,
}

impl FrameKeyedDetector {
    pub fn new(jitter: Jitter, seed: u64) -> Self {
        Self {
            scenes: HashMap::new(),
            jitter,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn insert(&mut self, pixels: Vec<u8>, scene: SyntheticScene) {
        self.scenes.insert(pixels, scene);
    }
}

impl Detector for FrameKeyedDetector {
    fn detect(&mut self, frame: &Frame) -> Vec<BoundingBox> {
        match self.scenes.get(&frame.pixels) {
            Some(scene) => synthetic_detect(frame, scene, self.jitter, &mut self.rng),
            None => Vec::new(),
        }
    }
}
