//! Registered devices, loaded from a JSON list of
//! `{uuid, class, name, capabilities, initial_state}`.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::instances::DeviceDirectory;
use crate::perception::DeviceClass;

use super::OrchestratorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Capability {
    Toggle,
    Granular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceState {
    pub power: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub uuid: Uuid,
    pub class: DeviceClass,
    pub name: String,
    pub capabilities: BTreeSet<Capability>,
    #[serde(rename = "initial_state")]
    pub state: DeviceState,
}

impl DeviceRecord {
    pub fn new(uuid: Uuid, class: DeviceClass, name: impl Into<String>, granular: bool) -> Self {
        let mut capabilities = BTreeSet::from([Capability::Toggle]);
        if granular {
            capabilities.insert(Capability::Granular);
        }
        Self {
            uuid,
            class,
            name: name.into(),
            capabilities,
            state: DeviceState {
                power: false,
                level: granular.then_some(0),
            },
        }
    }

    pub fn with_state(mut self, power: bool, level: Option<u8>) -> Self {
        self.state = DeviceState { power, level };
        self
    }

    pub fn is_granular(&self) -> bool {
        self.capabilities.contains(&Capability::Granular)
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let err = |msg: &str| Err(OrchestratorError::Registry(format!("{} ({}): {msg}", self.name, self.uuid)));
        if !self.class.is_controllable() {
            return err(&format!("class {} cannot be registered", self.class));
        }
        if !self.capabilities.contains(&Capability::Toggle) {
            return err("every device must support Toggle");
        }
        if self.is_granular() {
            if matches!(self.class, DeviceClass::SmartLock | DeviceClass::Blinds) {
                return err("SmartLock and Blinds are Toggle-only");
            }
            match self.state.level {
                None => return err("Granular device needs a level"),
                Some(l) if l > 100 => return err("level must be within 0..=100"),
                _ => {}
            }
        } else if self.state.level.is_some() {
            return err("level given for a Toggle-only device");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    devices: Vec<DeviceRecord>,
}

impl Registry {
    pub fn new(devices: Vec<DeviceRecord>) -> Result<Self, OrchestratorError> {
        let mut seen = HashSet::new();
        for d in &devices {
            d.validate()?;
            if !seen.insert(d.uuid) {
                return Err(OrchestratorError::Registry(format!("duplicate uuid {}", d.uuid)));
            }
        }
        Ok(Self { devices })
    }

    pub fn from_json(s: &str) -> Result<Self, OrchestratorError> {
        Self::new(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.devices).expect("registry serialises")
    }

    pub fn devices(&self) -> &[DeviceRecord] {
        &self.devices
    }

    pub fn get(&self, uuid: &Uuid) -> Option<&DeviceRecord> {
        self.devices.iter().find(|d| &d.uuid == uuid)
    }

    pub fn by_class(&self, class: DeviceClass) -> Vec<&DeviceRecord> {
        self.devices.iter().filter(|d| d.class == class).collect()
    }

    pub fn find_by_name(&self, name: &str) -> Option<&DeviceRecord> {
        self.devices.iter().find(|d| d.name == name)
    }

    /// Accepts a UUID or an exact device name.
    pub fn lookup(&self, key: &str) -> Option<&DeviceRecord> {
        match Uuid::parse_str(key) {
            Ok(u) => self.get(&u),
            Err(_) => self.find_by_name(key),
        }
    }
}

impl DeviceDirectory for Registry {
    fn device_class(&self, uuid: &Uuid) -> Option<DeviceClass> {
        self.get(uuid).map(|d| d.class)
    }
}
