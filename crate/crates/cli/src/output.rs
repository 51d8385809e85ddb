//! Text and JSON output. JSON goes out as
//! `{"version": 1, "command": ..., "ok": ..., "data": ...}` on success and
//! `{"version": 1, "command": ..., "ok": false, "error": ..., "details": ...}`
//! on failure.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use evac_core::envgraph::Violation;
use evac_core::SimError;

pub const ENVELOPE_VERSION: u32 = 1;

#[derive(Debug)]
pub enum Failure {
    /// Bad input data or a failed domain check; exit code 1.
    Domain { message: String, details: Option<Value> },
    /// Bad flags or arguments; exit code 2.
    Usage(String),
}

impl Failure {
    pub fn domain(message: impl Into<String>) -> Self {
        Failure::Domain { message: message.into(), details: None }
    }

    pub fn violations(violations: &[Violation]) -> Self {
        let lines: Vec<String> = violations.iter().map(ToString::to_string).collect();
        Failure::Domain {
            message: format!("invalid graph:\n  {}", lines.join("\n  ")),
            details: Some(json!({ "violations": violations })),
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::Domain { .. } => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::domain(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::domain(e.to_string())
    }
}

pub fn print_failure(json_mode: bool, command: &str, f: &Failure) {
    if json_mode {
        let (message, details) = match f {
            Failure::Domain { message, details } => (message.clone(), details.clone()),
            Failure::Usage(m) => (m.clone(), None),
        };
        let env = json!({
            "version": ENVELOPE_VERSION,
            "command": command,
            "ok": false,
            "error": message,
            "details": details,
        });
        out(&format!("{}\n", serde_json::to_string_pretty(&env).expect("envelope serializes")));
    } else {
        match f {
            Failure::Domain { message, .. } | Failure::Usage(message) => eprintln!("error: {message}"),
        }
    }
}

/// Prints `data` as an envelope or `text()` as plain text.
pub fn emit<T: Serialize>(json_mode: bool, command: &str, ok: bool, data: &T, text: impl FnOnce() -> String) {
    if json_mode {
        let env = json!({
            "version": ENVELOPE_VERSION,
            "command": command,
            "ok": ok,
            "data": data,
        });
        out(&format!("{}\n", serde_json::to_string_pretty(&env).expect("envelope serializes")));
    } else {
        out(&text());
    }
}

/// Writes to stdout; a closed pipe is not an error worth a panic.
fn out(s: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(s.as_bytes()).and_then(|_| stdout.flush());
}

pub fn fmt_opt(x: Option<f64>, precision: usize) -> String {
    x.map(|v| format!("{v:.precision$}")).unwrap_or_else(|| "-".into())
}

pub fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}
