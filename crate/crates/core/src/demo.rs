//! A small scripted household: two blinds, a speaker and a lamp. Used by the
//! CLI `demo` command and end-to-end tests.
//!
//! Script: the user clicks while pointing at the second blinds, waits for
//! the ring to go idle, then points at the speaker, holds and rolls the
//! wrist by +90 degrees.

use std::path::Path;

use uuid::Uuid;

use crate::gesture::GestureConfig;
use crate::image::GrayImage;
use crate::instances::{EmbeddingDb, PixelEmbedder, DEFAULT_DIM, DEFAULT_GRID};
use crate::orchestrator::{DeviceRecord, Registry};
use crate::perception::{BoundingBox, DeviceClass, Jitter};
use crate::protocol::{Frame, ImuSample};
use crate::ringsim::{bin_image, write_imu_trace, ImuTraceRow, SENSOR_SIZE};
use crate::simulate::{NetworkSpec, Scenario, Shot, SimulateError};

pub const BLINDS_1: Uuid = Uuid::from_u128(0x0b11_0001);
pub const BLINDS_2: Uuid = Uuid::from_u128(0x0b11_0002);
pub const SPEAKER: Uuid = Uuid::from_u128(0x05ee_0001);
pub const LAMP: Uuid = Uuid::from_u128(0x0119_0001);

pub const SPEAKER_START_LEVEL: u8 = 30;
/// Wrist roll applied during the speaker hold.
pub const SPEAKER_ROLL_DEG: f64 = 90.0;

const CLICK_DOWN_MS: f64 = 1000.0;
const CLICK_UP_MS: f64 = 1100.0;
const SPEAKER_SHOT_MS: f64 = 5000.0;
const HOLD_DOWN_MS: f64 = 6000.0;
const ROLL_START_MS: f64 = 6700.0;
const ROLL_END_MS: f64 = 7700.0;
const HOLD_UP_MS: f64 = 8100.0;
const TRACE_END_MS: f64 = 8500.0;
const TRACE_STEP_MS: f64 = 10.0;

pub struct DemoFixture {
    pub images: Vec<(String, GrayImage)>,
    pub scenario: Scenario,
    pub registry: Registry,
    pub db: EmbeddingDb,
    pub trace: Vec<ImuTraceRow>,
}

/// Horizontal slats over a vertical gradient; `variant` moves the slats and
/// shifts the wall tone.
pub fn blinds_image(variant: u8) -> GrayImage {
    let v = variant as usize;
    GrayImage::from_fn(SENSOR_SIZE, SENSOR_SIZE, |x, y| {
        let wall = (40 + y / 4 + 25 * v) as u8;
        let inside = (90..230).contains(&x) && (70..250).contains(&y);
        if inside && (y + 6 * v) % (12 + 4 * v) < 6 {
            (200 - 30 * v) as u8
        } else if inside {
            (120 + 10 * v) as u8
        } else {
            wall
        }
    })
}

/// Dark cabinet with two drivers on a light wall.
pub fn speaker_image() -> GrayImage {
    GrayImage::from_fn(SENSOR_SIZE, SENSOR_SIZE, |x, y| {
        let cab = (120..200).contains(&x) && (60..260).contains(&y);
        let d = |cx: f64, cy: f64, r: f64| ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt() < r;
        if cab && (d(160.0, 110.0, 22.0) || d(160.0, 200.0, 30.0)) {
            15
        } else if cab {
            55
        } else {
            (180 + (x + y) % 7) as u8
        }
    })
}

fn binned_frame(img: &GrayImage) -> Frame {
    Frame::from_image(&bin_image(img).expect("sensor-sized image")).expect("binned frame size")
}

fn tilt_row(t_ms: f64, tilt_deg: f64, button: bool) -> ImuTraceRow {
    let raw = (tilt_deg - 90.0).to_radians();
    let accel = ImuSample::accel_counts_from_g([0.0, raw.sin(), raw.cos()]);
    ImuTraceRow::from_sample(t_ms, ImuSample { accel, gyro: [0; 3] }, button)
}

pub fn demo_trace() -> Vec<ImuTraceRow> {
    let n = (TRACE_END_MS / TRACE_STEP_MS) as usize;
    (0..=n)
        .map(|i| {
            let t = i as f64 * TRACE_STEP_MS;
            let button = (CLICK_DOWN_MS..CLICK_UP_MS).contains(&t) || (HOLD_DOWN_MS..HOLD_UP_MS).contains(&t);
            let roll = ((t - ROLL_START_MS) / (ROLL_END_MS - ROLL_START_MS)).clamp(0.0, 1.0);
            tilt_row(t, 90.0 + SPEAKER_ROLL_DEG * roll, button)
        })
        .collect()
}

pub fn demo_registry() -> Registry {
    Registry::new(vec![
        DeviceRecord::new(BLINDS_1, DeviceClass::Blinds, "Blinds 1", false),
        DeviceRecord::new(BLINDS_2, DeviceClass::Blinds, "Blinds 2", false),
        DeviceRecord::new(SPEAKER, DeviceClass::Speaker, "Speaker", true)
            .with_state(true, Some(SPEAKER_START_LEVEL)),
        DeviceRecord::new(LAMP, DeviceClass::Lights, "Lamp", false),
    ])
    .expect("demo registry is valid")
}

pub fn demo_fixture() -> DemoFixture {
    let registry = demo_registry();
    let embedder = PixelEmbedder::new(DEFAULT_GRID, DEFAULT_DIM, PixelEmbedder::DEFAULT_SEED);
    let mut db = EmbeddingDb::new(DEFAULT_GRID, DEFAULT_DIM);
    let refs = [
        (BLINDS_1, blinds_image(0), "blinds 1 front"),
        (BLINDS_1, blinds_image(2), "blinds 1 evening"),
        (BLINDS_2, blinds_image(1), "blinds 2 front"),
        (SPEAKER, speaker_image(), "speaker"),
    ];
    for (i, (uuid, img, label)) in refs.iter().enumerate() {
        db.add_reference(&registry, &binned_frame(img), &embedder, *uuid, *label, i as u64)
            .expect("demo devices are registered");
    }

    let blinds_boxes = vec![
        BoundingBox::new(DeviceClass::Blinds, 80.0, 60.0, 70.0, 90.0, 0.91),
        BoundingBox::new(DeviceClass::Lights, 18.0, 16.0, 14.0, 14.0, 0.77),
    ];
    let speaker_boxes = vec![BoundingBox::new(DeviceClass::Speaker, 80.0, 60.0, 40.0, 100.0, 0.88)];
    let scenario = Scenario {
        duration_ms: None,
        drop_probability: 0.0,
        home_network: vec![NetworkSpec {
            t_ms: 0.0,
            present: true,
        }],
        shots: vec![
            Shot {
                from_ms: 0.0,
                image: "blinds2.pgm".into(),
                boxes: blinds_boxes,
            },
            Shot {
                from_ms: SPEAKER_SHOT_MS,
                image: "speaker.pgm".into(),
                boxes: speaker_boxes,
            },
        ],
        corrections: Vec::new(),
        detector: Jitter::default(),
        gesture: GestureConfig::default(),
    };
    DemoFixture {
        images: vec![
            ("blinds2.pgm".into(), blinds_image(1)),
            ("speaker.pgm".into(), speaker_image()),
        ],
        scenario,
        registry,
        db,
        trace: demo_trace(),
    }
}

impl DemoFixture {
    pub fn image_map(&self) -> std::collections::HashMap<String, GrayImage> {
        self.images.iter().cloned().collect()
    }

    /// Writes `scene.json`, `images/*.pgm`, `trace.csv`, `registry.json` and
    /// `db.irdb` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SimulateError> {
        let images = dir.join("images");
        std::fs::create_dir_all(&images)?;
        for (name, img) in &self.images {
            std::fs::write(images.join(name), img.to_pgm_bytes())?;
        }
        std::fs::write(dir.join("scene.json"), serde_json::to_string_pretty(&self.scenario)?)?;
        std::fs::write(dir.join("registry.json"), self.registry.to_json())?;
        write_imu_trace(std::fs::File::create(dir.join("trace.csv"))?, &self.trace)?;
        let db = std::fs::File::create(dir.join("db.irdb"))?;
        self.db
            .write_to(std::io::BufWriter::new(db))
            .map_err(|e| SimulateError::Scenario(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::Embedder;

    #[test]
    fn scene_frames_are_distinct() {
        let frames = [
            binned_frame(&blinds_image(0)),
            binned_frame(&blinds_image(1)),
            binned_frame(&blinds_image(2)),
            binned_frame(&speaker_image()),
        ];
        for i in 0..frames.len() {
            for j in i + 1..frames.len() {
                assert_ne!(frames[i].pixels, frames[j].pixels);
            }
        }
    }

    #[test]
    fn blinds_2_reference_wins_for_its_own_frame() {
        let fx = demo_fixture();
        let emb = PixelEmbedder::new(DEFAULT_GRID, DEFAULT_DIM, PixelEmbedder::DEFAULT_SEED);
        let q = emb.embed(&binned_frame(&blinds_image(1)));
        let res = fx.db.resolve_instance(&q, Some(DeviceClass::Blinds)).unwrap();
        assert_eq!(res.device_uuid, BLINDS_2);
        assert!((res.score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn trace_is_sorted_and_rolls() {
        let tr = demo_trace();
        assert!(tr.windows(2).all(|w| w[0].t_ms < w[1].t_ms));
        let tilt = |r: &ImuTraceRow| crate::gesture::tilt_degrees(r.sample().accel_g()).unwrap();
        assert!((tilt(&tr[0]) - 90.0).abs() < 0.1);
        assert!((tilt(tr.last().unwrap()) - 180.0).abs() < 0.3);
    }
}
