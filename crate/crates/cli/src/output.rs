use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use mmpid::Error;

pub const TOOL: &str = "mmpid";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl ToolInfo {
    pub fn current() -> Self {
        ToolInfo {
            name: TOOL,
            version: VERSION,
        }
    }
}

/// A failure reported to the user as a JSON object on stderr.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    pub exit: u8,
}

impl CliError {
    pub fn input(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
            exit: 2,
        }
    }

    pub fn not_found(path: &Path) -> Self {
        CliError::input(
            "input-not-found",
            format!("{}: no such file", path.display()),
        )
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            return CliError::not_found(path);
        }
        CliError::input("io-error", format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": { "code": self.code, "message": self.message, "exit_code": self.exit }
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::LabelSpace(_) => "invalid-label-space",
            Error::UnknownLabel(_) | Error::OutOfRange { .. } | Error::EmptyAnswer => {
                "unencodable-label"
            }
            Error::Schema { .. } | Error::RatingRange { .. } | Error::Csv(_) => "invalid-input",
            Error::Duplicate(_) => "duplicate-record",
            Error::MissingCondition { .. } => "missing-condition",
            Error::Empty(_) => "empty-input",
            Error::InvalidDistribution(_) => "invalid-distribution",
            Error::Infeasible(_) => "infeasible-constraints",
            Error::OracleTooLarge(_) => "oracle-too-large",
            Error::SolverFailure(_) => "solver-failure",
            Error::Config(_) => "invalid-config",
            Error::Json(_) => "invalid-json",
            Error::Io(_) => "io-error",
        };
        let exit = if matches!(e, Error::SolverFailure(_)) {
            1
        } else {
            2
        };
        CliError {
            code,
            message: e.to_string(),
            exit,
        }
    }
}

pub fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Writes `bytes` to `out`, or to stdout when `out` is `None`. Files are
/// written to a temporary sibling and renamed into place.
pub fn emit(out: Option<&PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    let Some(path) = out else {
        let mut stdout = std::io::stdout().lock();
        return stdout
            .write_all(bytes)
            .and_then(|_| stdout.flush())
            .map_err(|e| CliError::input("io-error", e.to_string()));
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let write = || -> std::io::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    };
    write().map_err(|e| CliError::input("output-error", format!("{}: {e}", path.display())))
}

pub fn emit_json<T: Serialize>(out: Option<&PathBuf>, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    emit(out, text.as_bytes())
}
