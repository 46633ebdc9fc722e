//! Error reporting shared by the CLI and the HTTP service.
//!
//! Exit codes are frozen: 0 ok, 1 runtime error, 2 input error.

use oscr_core::Error;
use serde::Serialize;
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Input,
    Runtime,
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    #[serde(skip)]
    pub class: Class,
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl CliError {
    pub fn input(kind: &str, message: impl Into<String>) -> Self {
        Self {
            class: Class::Input,
            kind: kind.into(),
            message: message.into(),
            details: None,
        }
    }

    pub fn runtime(kind: &str, message: impl Into<String>) -> Self {
        Self {
            class: Class::Runtime,
            kind: kind.into(),
            message: message.into(),
            details: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            Class::Input => EXIT_INPUT,
            Class::Runtime => EXIT_RUNTIME,
        }
    }

    /// The single line written to stderr.
    pub fn to_line(&self) -> String {
        json!({ "error": self }).to_string()
    }

    /// Malformed or schema-violating JSON. The message names the byte offset.
    pub fn json(file: &str, text: &str, e: &serde_json::Error) -> Self {
        let offset = byte_offset(text, e.line(), e.column());
        let mut err = Self::input(
            "json",
            format!("{file}: malformed JSON at byte {offset} (line {}, column {}): {e}", e.line(), e.column()),
        );
        err.details = Some(json!({ "file": file, "byte_offset": offset, "line": e.line(), "column": e.column() }));
        err
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let class = match &e {
            Error::Io { .. } | Error::Png(_) | Error::BudgetExhausted { .. } | Error::NoPairs => Class::Runtime,
            _ => Class::Input,
        };
        let details = match &e {
            Error::InvalidLayout(v) => Some(json!({ "violations": v })),
            Error::DegeneratePose { elevation } => Some(json!({ "elevation": elevation })),
            _ => None,
        };
        Self {
            class,
            kind: e.kind().to_string(),
            message: e.to_string(),
            details,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// serde_json reports 1-based line and column; column 0 means "before the
/// first character of the line" (as at end of input).
pub fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}
