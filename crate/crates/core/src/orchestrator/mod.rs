//! Phone-side pipeline: target selection, gesture-to-command mapping,
//! dispatch and undo.

mod command;
mod registry;
mod session;
mod transport;

pub use command::{Command, CommandAction};
pub use registry::{Capability, DeviceRecord, DeviceState, Registry};
pub use session::{IgnoreReason, Orchestrator, Outcome, Target, TargetVia, Timeline};
pub use transport::{Ack, DeviceTransport, MockTransport};

use thiserror::Error;
use uuid::Uuid;

use crate::instances::InstanceError;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid registry: {0}")]
    Registry(String),
    #[error("registry file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("no target in view")]
    NoTarget,
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("device {0} is not registered")]
    UnknownDevice(Uuid),
    #[error("transport failure: {0}")]
    TransportFailure(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}
