//! The JSON envelope every command writes. Its shape is published in
//! `schema/report.schema.json`.

use serde::Serialize;

use crate::config::{ConfigError, Location};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Violation,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Violation => 1,
            Status::Error => 2,
        }
    }
}

/// The flag values a run was started with. The worker count is left out on
/// purpose: reports must not depend on it.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub grid: Option<usize>,
    pub tol: Option<f64>,
    pub t_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Io,
    Config,
    Input,
    Numerical,
    Parse,
    Evaluation,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub kind: ErrorKind,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
    /// Byte offset inside the offending expression.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<Vec<String>>,
}

impl ErrorReport {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            location: None,
            offset: None,
            expected: None,
        }
    }
}

impl From<&ConfigError> for ErrorReport {
    fn from(e: &ConfigError) -> Self {
        let mut r = ErrorReport::new(
            if matches!(e, ConfigError::Io { .. }) {
                ErrorKind::Io
            } else {
                ErrorKind::Config
            },
            e.to_string(),
        );
        r.location = e.location().cloned();
        if let Some(p) = e.parse_error() {
            r.offset = Some(p.offset);
            if let fuzzfix::expr::ParseErrorKind::Expected { expected, .. } = &p.kind {
                r.expected = Some(expected.iter().map(|s| s.to_string()).collect());
            }
        }
        r
    }
}

impl From<&fuzzfix::Error> for ErrorReport {
    fn from(e: &fuzzfix::Error) -> Self {
        let kind = match e {
            fuzzfix::Error::Input(_) => ErrorKind::Input,
            fuzzfix::Error::Numerical(_) => ErrorKind::Numerical,
            fuzzfix::Error::Parse(_) => ErrorKind::Parse,
            fuzzfix::Error::Eval(_) => ErrorKind::Evaluation,
        };
        ErrorReport::new(kind, e.to_string())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Envelope {
    pub tool: &'static str,
    pub schema_version: u32,
    pub command: String,
    pub status: Status,
    pub exit_code: i32,
    pub config: Option<String>,
    pub settings: Settings,
    pub result: Option<serde_json::Value>,
    pub error: Option<ErrorReport>,
}

impl Envelope {
    pub fn new(command: &str, config: Option<String>, settings: Settings) -> Self {
        Self {
            tool: "fuzzfix",
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            status: Status::Error,
            exit_code: Status::Error.exit_code(),
            config,
            settings,
            result: None,
            error: None,
        }
    }

    pub fn finish(
        mut self,
        status: Status,
        result: Option<serde_json::Value>,
        error: Option<ErrorReport>,
    ) -> Self {
        self.status = status;
        self.exit_code = status.exit_code();
        self.result = result;
        self.error = error;
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}
