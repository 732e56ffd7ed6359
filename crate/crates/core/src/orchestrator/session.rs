use std::fmt;

use uuid::Uuid;

use crate::gesture::{map_rotation, GestureEvent, GestureKind};
use crate::instances::{undo_correct, EmbeddingDb, Embedder, PatchEmbedding};
use crate::perception::{coda, Detector, DeviceClass};
use crate::protocol::Frame;

use super::{Ack, Command, CommandAction, DeviceTransport, OrchestratorError, Registry};

const LEVEL_RANGE: (f64, f64) = (0.0, 100.0);

/// Line-oriented event log: `t_ms kind detail`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Timeline {
    lines: Vec<String>,
}

impl Timeline {
    pub fn push(&mut self, t_ms: f64, kind: &str, detail: impl fmt::Display) {
        self.lines.push(format!("{t_ms:.2} {kind} {detail}"));
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn render(&self) -> String {
        let mut s = self.lines.join("\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetVia {
    /// Only one registered device of the detected class.
    Shortcut,
    Resolved { score: f64 },
    /// No registered device of the detected class; full database search.
    Unseen { score: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub uuid: Uuid,
    pub class: DeviceClass,
    pub name: String,
    pub via: TargetVia,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IgnoreReason {
    /// Rotation aimed at a Toggle-only device.
    CapabilityMismatch,
    NoActiveHold,
    /// Accumulated rotation has not reached one level step yet.
    BelowResolution,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Dispatched { command: Command, ack: Ack, target: Target },
    Armed { target: Target },
    HoldEnded,
    Undone { command: Command, ack: Ack },
    Ignored(IgnoreReason),
}

#[derive(Debug, Clone)]
struct QueryRecord {
    frame: Frame,
    embedding: Option<PatchEmbedding>,
}

#[derive(Debug, Clone)]
struct UndoRecord {
    command: Command,
    /// Sum of applied level changes for a hold, zero for toggles.
    applied_total: i32,
    hold: Option<u64>,
    query: Option<QueryRecord>,
}

#[derive(Debug, Clone)]
struct ArmedHold {
    id: u64,
    target: Target,
    granular: bool,
    carry: f64,
    query: QueryRecord,
}

/// One interaction session. Events must be fed in time order.
pub struct Orchestrator<D, E, T> {
    registry: Registry,
    db: EmbeddingDb,
    detector: D,
    embedder: E,
    transport: T,
    timeline: Timeline,
    next_id: u64,
    next_hold: u64,
    last: Option<UndoRecord>,
    hold: Option<ArmedHold>,
    pending_correction: Option<QueryRecord>,
}

impl<D: Detector, E: Embedder, T: DeviceTransport> Orchestrator<D, E, T> {
    pub fn new(registry: Registry, db: EmbeddingDb, detector: D, embedder: E, transport: T) -> Self {
        Self {
            registry,
            db,
            detector,
            embedder,
            transport,
            timeline: Timeline::default(),
            next_id: 1,
            next_hold: 1,
            last: None,
            hold: None,
            pending_correction: None,
        }
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn db(&self) -> &EmbeddingDb {
        &self.db
    }

    pub fn embedder(&self) -> &E {
        &self.embedder
    }

    pub fn detector_mut(&mut self) -> &mut D {
        &mut self.detector
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn timeline(&self) -> &Timeline {
        &self.timeline
    }

    pub fn timeline_mut(&mut self) -> &mut Timeline {
        &mut self.timeline
    }

    pub fn has_pending_correction(&self) -> bool {
        self.pending_correction.is_some()
    }

    pub fn into_db(self) -> EmbeddingDb {
        self.db
    }

    /// Runs one gesture against the frame current at commit time. Errors are
    /// also written to the timeline.
    pub fn handle_interaction(
        &mut self,
        frame: Option<&Frame>,
        gesture: &GestureEvent,
    ) -> Result<Outcome, OrchestratorError> {
        let t = gesture.t_ms;
        let result = match gesture.kind {
            GestureKind::Click => self.on_click(frame, t),
            GestureKind::HoldStart => self.on_hold_start(frame, t),
            GestureKind::RotateDelta(d) => self.on_rotate(d, t),
            GestureKind::HoldEnd => {
                if self.hold.take().is_some() {
                    self.timeline.push(t, "hold", "end");
                }
                Ok(Outcome::HoldEnded)
            }
            GestureKind::DoubleClick => self.undo_last(t),
        };
        if let Err(e) = &result {
            self.timeline.push(t, "error", e);
        }
        result
    }

    fn on_click(&mut self, frame: Option<&Frame>, t: f64) -> Result<Outcome, OrchestratorError> {
        let frame = frame.ok_or(OrchestratorError::NoTarget)?;
        let (target, query) = self.select_target(frame, t)?;
        let command = self.issue(target.uuid, CommandAction::Toggle, t, None);
        let ack = self.dispatch(&command)?;
        self.hold = None;
        self.last = Some(UndoRecord {
            command,
            applied_total: 0,
            hold: None,
            query: Some(query),
        });
        Ok(Outcome::Dispatched { command, ack, target })
    }

    fn on_hold_start(&mut self, frame: Option<&Frame>, t: f64) -> Result<Outcome, OrchestratorError> {
        self.hold = None;
        let frame = frame.ok_or(OrchestratorError::NoTarget)?;
        let (target, query) = self.select_target(frame, t)?;
        let granular = self
            .registry
            .get(&target.uuid)
            .is_some_and(|d| d.is_granular());
        self.timeline.push(t, "hold", format!("start {}", target.name));
        let id = self.next_hold;
        self.next_hold += 1;
        self.hold = Some(ArmedHold {
            id,
            target: target.clone(),
            granular,
            carry: 0.0,
            query,
        });
        Ok(Outcome::Armed { target })
    }

    fn on_rotate(&mut self, delta_deg: f64, t: f64) -> Result<Outcome, OrchestratorError> {
        let Some(hold) = self.hold.as_mut() else {
            return Ok(Outcome::Ignored(IgnoreReason::NoActiveHold));
        };
        if !hold.granular {
            let name = hold.target.name.clone();
            self.timeline.push(t, "ignore", format!("CapabilityMismatch {name} RotateDelta {delta_deg}"));
            return Ok(Outcome::Ignored(IgnoreReason::CapabilityMismatch));
        }
        let wanted = map_rotation(delta_deg, LEVEL_RANGE) + hold.carry;
        let step = wanted.round();
        if step == 0.0 {
            hold.carry = wanted;
            return Ok(Outcome::Ignored(IgnoreReason::BelowResolution));
        }
        let (hold_id, target) = (hold.id, hold.target.clone());
        let command = self.issue(target.uuid, CommandAction::SetLevelDelta(step as i32), t, None);
        let ack = self.dispatch(&command)?;
        let hold = self.hold.as_mut().expect("hold still armed");
        hold.carry = wanted - step;
        match self.last.as_mut() {
            Some(rec) if rec.hold == Some(hold_id) => rec.applied_total += ack.applied_delta,
            _ => {
                self.last = Some(UndoRecord {
                    command,
                    applied_total: ack.applied_delta,
                    hold: Some(hold_id),
                    query: Some(hold.query.clone()),
                })
            }
        }
        Ok(Outcome::Dispatched { command, ack, target })
    }

    /// Reverses the last command or hold and keeps its query for correction.
    pub fn undo_last(&mut self, t: f64) -> Result<Outcome, OrchestratorError> {
        let rec = self.last.take().ok_or(OrchestratorError::NothingToUndo)?;
        let action = rec.command.action.inverse(rec.applied_total);
        let command = self.issue(rec.command.target, action, t, Some(rec.command.id));
        match self.dispatch(&command) {
            Ok(ack) => {
                self.hold = None;
                self.pending_correction = rec.query;
                Ok(Outcome::Undone { command, ack })
            }
            Err(e) => {
                self.last = Some(rec);
                Err(e)
            }
        }
    }

    /// Stores the undone interaction's query as a reference for `device`.
    pub fn apply_correction(&mut self, device: Uuid, t: f64) -> Result<usize, OrchestratorError> {
        let pending = self.pending_correction.as_mut();
        let query = match pending {
            Some(q) => Some(match q.embedding.take() {
                Some(e) => e,
                None => self.embedder.embed(&q.frame),
            }),
            None => None,
        };
        let at = t.max(0.0).round() as u64;
        match undo_correct(&mut self.db, &self.registry, query.as_ref(), device, at) {
            Ok(idx) => {
                self.pending_correction = None;
                let name = self.registry.get(&device).map_or("?", |d| d.name.as_str());
                self.timeline.push(t, "correct", format!("{name} reference={idx} db_size={}", self.db.len()));
                Ok(idx)
            }
            Err(e) => {
                if let (Some(p), Some(q)) = (self.pending_correction.as_mut(), query) {
                    p.embedding = Some(q);
                }
                let e = OrchestratorError::from(e);
                self.timeline.push(t, "error", &e);
                Err(e)
            }
        }
    }

    fn select_target(&mut self, frame: &Frame, t: f64) -> Result<(Target, QueryRecord), OrchestratorError> {
        let boxes = self.detector.detect(frame);
        let Some(best) = coda(&boxes, frame.width as f64, frame.height as f64) else {
            self.timeline.push(t, "detect", format!("none boxes={}", boxes.len()));
            return Err(OrchestratorError::NoTarget);
        };
        self.timeline.push(
            t,
            "detect",
            format!("{} cx={:.1} cy={:.1} boxes={}", best.class_id, best.cx, best.cy, boxes.len()),
        );
        let class = match best.class_id {
            DeviceClass::Door | DeviceClass::DoorHandle => DeviceClass::SmartLock,
            DeviceClass::Window | DeviceClass::Background => return Err(OrchestratorError::NoTarget),
            c => c,
        };
        let mut query = QueryRecord {
            frame: frame.clone(),
            embedding: None,
        };
        let candidates: Vec<Uuid> = self.registry.by_class(class).iter().map(|d| d.uuid).collect();
        let (uuid, via) = match candidates.as_slice() {
            [only] => (*only, TargetVia::Shortcut),
            [] if self.db.is_empty() => return Err(OrchestratorError::NoTarget),
            many => {
                let q = self.embedder.embed(frame);
                let hint = (!many.is_empty()).then_some(class);
                let res = self.db.resolve_instance(&q, hint)?;
                query.embedding = Some(q);
                let via = if hint.is_some() {
                    TargetVia::Resolved { score: res.score }
                } else {
                    TargetVia::Unseen { score: res.score }
                };
                (res.device_uuid, via)
            }
        };
        let dev = self
            .registry
            .get(&uuid)
            .ok_or(OrchestratorError::UnknownDevice(uuid))?;
        let target = Target {
            uuid,
            class: dev.class,
            name: dev.name.clone(),
            via,
        };
        let how = match via {
            TargetVia::Shortcut => "shortcut".to_string(),
            TargetVia::Resolved { score } => format!("resolved score={score:.6}"),
            TargetVia::Unseen { score } => format!("unseen score={score:.6}"),
        };
        self.timeline.push(t, "target", format!("{} {} {how}", target.name, target.uuid));
        Ok((target, query))
    }

    fn issue(&mut self, target: Uuid, action: CommandAction, t: f64, undo_of: Option<u64>) -> Command {
        let id = self.next_id;
        self.next_id += 1;
        Command {
            id,
            target,
            action,
            issued_at_ms: t,
            undo_of,
        }
    }

    fn dispatch(&mut self, c: &Command) -> Result<Ack, OrchestratorError> {
        let ack = self.transport.send(c)?;
        let name = self.registry.get(&c.target).map_or("?", |d| d.name.as_str());
        let kind = if c.is_undo() { "undo" } else { "dispatch" };
        let level = ack.level.map_or("-".to_string(), |l| l.to_string());
        self.timeline.push(
            c.issued_at_ms,
            kind,
            format!("id={} {} {} power={} level={}", c.id, name, c.action, ack.power, level),
        );
        Ok(ack)
    }
}
