//! Command delivery to devices.

use std::collections::{BTreeMap, HashMap};

use uuid::Uuid;

use super::{Command, CommandAction, DeviceRecord, OrchestratorError};

/// Acknowledgment carrying the device state after the command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack {
    pub command_id: u64,
    pub target: Uuid,
    pub power: bool,
    pub level: Option<u8>,
    /// Level change after clamping; zero for toggles.
    pub applied_delta: i32,
    /// False when the id had already been applied.
    pub fresh: bool,
}

pub trait DeviceTransport {
    /// Applies each command id at most once.
    fn send(&mut self, command: &Command) -> Result<Ack, OrchestratorError>;
}

/// In-memory devices that always acknowledge unless a failure is injected.
#[derive(Debug, Clone, Default)]
pub struct MockTransport {
    devices: BTreeMap<Uuid, DeviceRecord>,
    applied: HashMap<u64, Ack>,
    fail_next: usize,
    log: Vec<String>,
}

impl MockTransport {
    pub fn new<'a>(devices: impl IntoIterator<Item = &'a DeviceRecord>) -> Self {
        Self {
            devices: devices.into_iter().map(|d| (d.uuid, d.clone())).collect(),
            ..Self::default()
        }
    }

    /// The next `n` sends fail without touching device state.
    pub fn fail_next(&mut self, n: usize) {
        self.fail_next = n;
    }

    pub fn device(&self, uuid: &Uuid) -> Option<&DeviceRecord> {
        self.devices.get(uuid)
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceRecord> {
        self.devices.values()
    }

    pub fn log(&self) -> &[String] {
        &self.log
    }
}

impl DeviceTransport for MockTransport {
    fn send(&mut self, c: &Command) -> Result<Ack, OrchestratorError> {
        if let Some(prev) = self.applied.get(&c.id) {
            self.log.push(format!("{} replay id={}", c.issued_at_ms, c.id));
            return Ok(Ack { fresh: false, ..*prev });
        }
        if self.fail_next > 0 {
            self.fail_next -= 1;
            self.log.push(format!("{} fail id={}", c.issued_at_ms, c.id));
            return Err(OrchestratorError::TransportFailure(format!("injected failure for command {}", c.id)));
        }
        let dev = self
            .devices
            .get_mut(&c.target)
            .ok_or(OrchestratorError::UnknownDevice(c.target))?;
        let applied_delta = match c.action {
            CommandAction::Toggle => {
                dev.state.power = !dev.state.power;
                0
            }
            CommandAction::SetLevelDelta(d) => {
                let Some(level) = dev.state.level.filter(|_| dev.is_granular()) else {
                    return Err(OrchestratorError::TransportFailure(format!(
                        "{} does not accept level changes",
                        dev.name
                    )));
                };
                let new = (level as i32 + d).clamp(0, 100);
                dev.state.level = Some(new as u8);
                new - level as i32
            }
        };
        let ack = Ack {
            command_id: c.id,
            target: c.target,
            power: dev.state.power,
            level: dev.state.level,
            applied_delta,
            fresh: true,
        };
        self.log.push(format!(
            "{} apply id={} {} {} power={} level={}",
            c.issued_at_ms,
            c.id,
            dev.name,
            c.action,
            dev.state.power,
            dev.state.level.map_or("-".to_string(), |l| l.to_string())
        ));
        self.applied.insert(c.id, ack);
        Ok(ack)
    }
}
