use std::fmt;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommandAction {
    Toggle,
    SetLevelDelta(i32),
}

impl CommandAction {
    /// Action that reverses `self` given the delta the device actually
    /// applied.
    pub fn inverse(self, applied_delta: i32) -> Self {
        match self {
            CommandAction::Toggle => CommandAction::Toggle,
            CommandAction::SetLevelDelta(_) => CommandAction::SetLevelDelta(-applied_delta),
        }
    }
}

impl fmt::Display for CommandAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandAction::Toggle => f.write_str("Toggle"),
            CommandAction::SetLevelDelta(d) => write!(f, "SetLevelDelta({d:+})"),
        }
    }
}

/// One dispatched command. An undo is an inverse action carrying the id of
/// the command it reverses in `undo_of`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub id: u64,
    pub target: Uuid,
    pub action: CommandAction,
    pub issued_at_ms: f64,
    pub undo_of: Option<u64>,
}

impl Command {
    pub fn is_undo(&self) -> bool {
        self.undo_of.is_some()
    }
}
