use std::fmt;
use std::path::Path;

/// Failure categories mapped to process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Io,
    Validation,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 1,
            Kind::Io => 2,
            Kind::Validation => 3,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Io => "io",
            Kind::Validation => "validation",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self { kind: Kind::Usage, message: msg.to_string() }
    }

    pub fn invalid(msg: impl fmt::Display) -> Self {
        Self { kind: Kind::Validation, message: msg.to_string() }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self { kind: Kind::Io, message: format!("{}: {e}", path.display()) }
    }

    /// Single JSON line for stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind.name(),
            "code": self.kind.exit_code(),
            "message": self.message,
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.name(), self.message)
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub trait ValidationExt<T> {
    fn invalid(self) -> CliResult<T>;
    fn invalid_in(self, path: &Path) -> CliResult<T>;
}

impl<T, E: fmt::Display> ValidationExt<T> for Result<T, E> {
    fn invalid(self) -> CliResult<T> {
        self.map_err(CliError::invalid)
    }

    fn invalid_in(self, path: &Path) -> CliResult<T> {
        self.map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
    }
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(path: &Path) -> CliResult {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}
