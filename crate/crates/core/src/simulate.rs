//! Trace-driven run of the whole system: the ring produces packets, a lossy
//! link drops some, and the phone assembles frames, recognises gestures and
//! drives the orchestrator.
//!
//! Scenario file (JSON):
//!
//! ```json
//! {
//!   "duration_ms": 12000,
//!   "drop_probability": 0.0,
//!   "home_network": [{"t_ms": 0, "present": true}],
//!   "shots": [{"from_ms": 0, "image": "blinds2.pgm",
//!              "boxes": [{"class": "Blinds", "cx": 80, "cy": 60, "w": 40, "h": 50, "confidence": 0.9}]}],
//!   "corrections": [{"t_ms": 9000, "device": "Blinds 2"}],
//!   "detector": {"center_sigma_px": 0.0, "drop_probability": 0.0}
//! }
//! ```
//!
//! Images are 320x320 PGM files. `shots[i]` is what the camera sees from
//! `from_ms` until the next shot.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gesture::{GestureConfig, GestureError, GestureEvent, GestureKind, GestureRecognizer};
use crate::image::{GrayImage, ImageError};
use crate::instances::{EmbeddingDb, PixelEmbedder};
use crate::orchestrator::{MockTransport, Orchestrator, OrchestratorError, Outcome, Registry};
use crate::perception::{BoundingBox, FrameKeyedDetector, Jitter, SyntheticScene};
use crate::protocol::{Assembler, AssemblerEvent, AssemblyReport, Frame};
use crate::ringsim::{bin_image, run_ring, ImuTraceRow, NetworkChange, RingConfig, SimError};

/// Packet silence that ends a streaming session on the phone side.
pub const SESSION_GAP_MS: f64 = 100.0;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("scenario file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image: {0}")]
    Image(#[from] ImageError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Gesture(#[from] GestureError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub t_ms: f64,
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub from_ms: f64,
    pub image: String,
    #[serde(default)]
    pub boxes: Vec<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub t_ms: f64,
    /// UUID or device name.
    pub device: String,
}

fn default_home() -> Vec<NetworkSpec> {
    vec![NetworkSpec {
        t_ms: 0.0,
        present: true,
    }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub duration_ms: Option<f64>,
    #[serde(default)]
    pub drop_probability: f64,
    #[serde(default = "default_home")]
    pub home_network: Vec<NetworkSpec>,
    pub shots: Vec<Shot>,
    #[serde(default)]
    pub corrections: Vec<Correction>,
    #[serde(default)]
    pub detector: Jitter,
    #[serde(default)]
    pub gesture: GestureConfig,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self, SimulateError> {
        let sc: Self = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(SimulateError::Scenario("drop_probability must be within [0, 1]".into()));
        }
        if self.shots.is_empty() {
            return Err(SimulateError::Scenario("at least one shot is required".into()));
        }
        if self.shots.windows(2).any(|w| w[0].from_ms > w[1].from_ms) {
            return Err(SimulateError::Scenario("shots must be sorted by from_ms".into()));
        }
        for s in &self.shots {
            for b in &s.boxes {
                b.validate(crate::protocol::FRAME_WIDTH as f64, crate::protocol::FRAME_HEIGHT as f64)
                    .map_err(|e| SimulateError::Scenario(e.to_string()))?;
            }
        }
        self.gesture.validate()?;
        Ok(())
    }

    /// Reads every referenced image from `dir`.
    pub fn load_images(&self, dir: &Path) -> Result<HashMap<String, GrayImage>, SimulateError> {
        let mut out = HashMap::new();
        for s in &self.shots {
            if out.contains_key(&s.image) {
                continue;
            }
            let f = std::fs::File::open(dir.join(&s.image))?;
            let img = GrayImage::read_pgm(std::io::BufReader::new(f))?;
            out.insert(s.image.clone(), img);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    /// `t_ms kind detail` lines in time order.
    pub timeline: String,
    pub summary: String,
    pub assembly: AssemblyReport,
    pub packets_sent: usize,
    pub packets_dropped: usize,
    pub gestures: Vec<GestureEvent>,
    pub commands: usize,
    pub energy_mah: f64,
    pub db: EmbeddingDb,
    pub transport: MockTransport,
}

pub struct SimulationInput<'a> {
    pub scenario: &'a Scenario,
    pub images: &'a HashMap<String, GrayImage>,
    pub trace: &'a [ImuTraceRow],
    pub registry: Registry,
    pub db: EmbeddingDb,
    pub ring: RingConfig,
    pub seed: u64,
}

type Session = Orchestrator<FrameKeyedDetector, PixelEmbedder, MockTransport>;

fn needs_frame(g: &GestureEvent) -> bool {
    matches!(g.kind, GestureKind::Click | GestureKind::HoldStart)
}

fn gesture_detail(g: &GestureEvent) -> String {
    match g.kind {
        GestureKind::RotateDelta(d) => format!("RotateDelta {d}"),
        GestureKind::Click => "Click".into(),
        GestureKind::DoubleClick => "DoubleClick".into(),
        GestureKind::HoldStart => "HoldStart".into(),
        GestureKind::HoldEnd => "HoldEnd".into(),
    }
}

struct Phone {
    orch: Session,
    last_frame: Option<Frame>,
    queue: VecDeque<GestureEvent>,
    gestures: Vec<GestureEvent>,
    commands: usize,
}

impl Phone {
    fn gesture(&mut self, g: GestureEvent) {
        self.orch.timeline_mut().push(g.t_ms, "gesture", gesture_detail(&g));
        self.gestures.push(g);
        self.queue.push_back(g);
        self.drain(false);
    }

    /// Handles queued gestures in order; a gesture that needs a frame waits
    /// for one unless `force` is set.
    fn drain(&mut self, force: bool) {
        while let Some(g) = self.queue.front().copied() {
            if needs_frame(&g) && self.last_frame.is_none() && !force {
                break;
            }
            self.queue.pop_front();
            if let Ok(Outcome::Dispatched { .. } | Outcome::Undone { .. }) =
                self.orch.handle_interaction(self.last_frame.as_ref(), &g)
            {
                self.commands += 1;
            }
        }
    }
}

/// Runs the scenario end to end. Deterministic for a given seed.
pub fn run_simulation(input: SimulationInput<'_>) -> Result<SimulationReport, SimulateError> {
    let sc = input.scenario;
    sc.validate()?;
    let image = |name: &str| {
        input
            .images
            .get(name)
            .ok_or_else(|| SimulateError::Scenario(format!("image {name} not loaded")))
    };

    let mut detector = FrameKeyedDetector::new(sc.detector, input.seed ^ 0xD5_7EC7);
    for s in &sc.shots {
        let binned = bin_image(image(&s.image)?)?;
        detector.insert(binned.into_pixels(), SyntheticScene { boxes: s.boxes.clone() });
    }
    let mut corrections = Vec::with_capacity(sc.corrections.len());
    for c in &sc.corrections {
        let dev = input
            .registry
            .lookup(&c.device)
            .ok_or_else(|| SimulateError::Scenario(format!("correction names unknown device {}", c.device)))?;
        corrections.push((c.t_ms, dev.uuid));
    }
    corrections.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut corrections = VecDeque::from(corrections);

    let network: Vec<NetworkChange> = sc
        .home_network
        .iter()
        .map(|n| NetworkChange {
            t_ms: n.t_ms,
            present: n.present,
        })
        .collect();
    let shots = &sc.shots;
    let mut capture = |t: f64| -> Result<GrayImage, SimError> {
        let idx = shots.iter().rposition(|s| s.from_ms <= t).unwrap_or(0);
        input
            .images
            .get(&shots[idx].image)
            .cloned()
            .ok_or_else(|| SimError::Scene(format!("image {} not loaded", shots[idx].image)))
    };
    let run = run_ring(&input.ring, input.trace, &network, sc.duration_ms, &mut capture)?;

    let (grid, dim) = input.db.shape();
    let transport = MockTransport::new(input.registry.devices());
    let embedder = PixelEmbedder::new(grid, dim, PixelEmbedder::DEFAULT_SEED);
    let mut phone = Phone {
        orch: Orchestrator::new(input.registry, input.db, detector, embedder, transport),
        last_frame: None,
        queue: VecDeque::new(),
        gestures: Vec::new(),
        commands: 0,
    };
    let mut recognizer = GestureRecognizer::new(sc.gesture)?;
    let mut assembler = Assembler::new();
    let mut assembly = AssemblyReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(input.seed);
    let mut states = run.state_changes.iter().peekable();
    let mut dropped = 0usize;
    let mut last_arrival: Option<f64> = None;

    let mut flush_until = |phone: &mut Phone, t: f64, corrections: &mut VecDeque<(f64, uuid::Uuid)>| {
        while let Some(s) = states.next_if(|s| s.t_ms <= t) {
            phone.orch.timeline_mut().push(s.t_ms, "state", s.state);
        }
        while let Some((tc, dev)) = corrections.front().copied().filter(|c| c.0 <= t) {
            corrections.pop_front();
            let _ = phone.orch.apply_correction(dev, tc);
        }
    };

    let end_session = |phone: &mut Phone, recognizer: &mut GestureRecognizer, assembler: &mut Assembler| {
        for g in recognizer.finish() {
            phone.gesture(g);
        }
        phone.drain(true);
        phone.last_frame = None;
        assembler.reset();
    };

    for tp in &run.packets {
        flush_until(&mut phone, tp.t_ms, &mut corrections);
        let lost = rng.random::<f64>() < sc.drop_probability;
        if lost {
            dropped += 1;
            continue;
        }
        if last_arrival.is_some_and(|prev| tp.t_ms - prev > SESSION_GAP_MS) {
            end_session(&mut phone, &mut recognizer, &mut assembler);
        }
        last_arrival = Some(tp.t_ms);

        let (frame, events) = assembler.push(&tp.packet);
        assembly.record(frame.as_ref(), &events);
        if let Some(f) = frame {
            phone
                .orch
                .timeline_mut()
                .push(tp.t_ms, "frame", format!("first_seq={} mean={:.2}", f.first_seq, mean(&f.pixels)));
            phone.last_frame = Some(f);
            phone.drain(false);
        }
        for ev in events {
            match ev {
                AssemblerEvent::Telemetry(tel) => {
                    let accel = tel.imu.map(|s| s.accel_g());
                    for g in recognizer.process_sample(tp.t_ms, tel.button, accel) {
                        phone.gesture(g);
                    }
                }
                AssemblerEvent::SequenceGap { expected, got } => {
                    phone.orch.timeline_mut().push(tp.t_ms, "gap", format!("expected={expected} got={got}"));
                }
                AssemblerEvent::FrameInvalidated { first_seq, reason } => {
                    phone
                        .orch
                        .timeline_mut()
                        .push(tp.t_ms, "invalid", format!("first_seq={first_seq} reason={reason:?}"));
                }
                AssemblerEvent::Discarded { .. } => {}
            }
        }
    }
    end_session(&mut phone, &mut recognizer, &mut assembler);
    flush_until(&mut phone, f64::INFINITY, &mut corrections);

    let energy_mah = run.energy_mah(&input.ring.profile);
    let Phone {
        orch,
        gestures,
        commands,
        ..
    } = phone;
    let timeline = orch.timeline().render();
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "packets_sent={} packets_dropped={} frames_ok={} frames_invalidated={} imu_samples={} gestures={} commands={} energy_mah={:.6} end_ms={:.2}",
        run.packets.len(),
        dropped,
        assembly.frames_ok,
        assembly.frames_invalidated,
        assembly.imu_samples,
        gestures.len(),
        commands,
        energy_mah,
        run.end_ms,
    );
    for d in orch.transport().devices() {
        let level = d.state.level.map_or("-".to_string(), |l| l.to_string());
        let _ = writeln!(summary, "device {} {} power={} level={}", d.name, d.uuid, d.state.power, level);
    }
    let transport = orch.transport().clone();
    Ok(SimulationReport {
        timeline,
        summary,
        assembly,
        packets_sent: run.packets.len(),
        packets_dropped: dropped,
        gestures,
        commands,
        energy_mah,
        db: orch.into_db(),
        transport,
    })
}

fn mean(px: &[u8]) -> f64 {
    px.iter().map(|&p| p as f64).sum::<f64>() / px.len().max(1) as f64
}
