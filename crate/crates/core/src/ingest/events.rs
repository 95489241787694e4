use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use chrono::DateTime;
use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

/// One eCAR record, reduced to the fields the featurizer uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostEvent {
    pub action: String,
    pub actor_id: String,
    pub object: String,
    pub object_id: String,
    pub hostname: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    MalformedJson,
    MissingField,
    InvalidField,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseIssue {
    /// 1-based input line.
    pub line: usize,
    pub kind: IssueKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    pub events: Vec<HostEvent>,
    pub issues: Vec<ParseIssue>,
}

impl ParseReport {
    pub fn malformed(&self) -> usize {
        self.issues.iter().filter(|i| i.kind == IssueKind::MalformedJson).count()
    }

    /// Well-formed records dropped for missing or invalid fields.
    pub fn skipped(&self) -> usize {
        self.issues.len() - self.malformed()
    }
}

fn string_field(obj: &serde_json::Map<String, Value>, key: &str) -> std::result::Result<String, (IssueKind, String)> {
    match obj.get(key) {
        None | Some(Value::Null) => Err((IssueKind::MissingField, format!("missing \"{key}\""))),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err((IssueKind::InvalidField, format!("\"{key}\" is not a string: {other}"))),
    }
}

fn timestamp_field(obj: &serde_json::Map<String, Value>) -> std::result::Result<i64, (IssueKind, String)> {
    let invalid = |v: &Value| (IssueKind::InvalidField, format!("unusable \"timestamp\": {v}"));
    match obj.get("timestamp") {
        None | Some(Value::Null) => Err((IssueKind::MissingField, "missing \"timestamp\"".into())),
        Some(v @ Value::Number(n)) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.is_finite()).map(|f| f as i64))
            .ok_or_else(|| invalid(v)),
        Some(v @ Value::String(s)) => s
            .parse::<i64>()
            .ok()
            .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.timestamp_millis()))
            .ok_or_else(|| invalid(v)),
        Some(v) => Err(invalid(v)),
    }
}

fn parse_record(value: Value) -> std::result::Result<HostEvent, (IssueKind, String)> {
    let Value::Object(obj) = value else {
        return Err((IssueKind::InvalidField, "record is not a JSON object".into()));
    };
    let event = HostEvent {
        action: string_field(&obj, "action")?,
        actor_id: string_field(&obj, "actorID")?,
        object: string_field(&obj, "object")?,
        object_id: string_field(&obj, "objectID")?,
        hostname: string_field(&obj, "hostname")?,
        timestamp: timestamp_field(&obj)?,
    };
    if event.actor_id.is_empty() {
        return Err((IssueKind::InvalidField, "empty \"actorID\"".into()));
    }
    if event.timestamp < 0 {
        return Err((IssueKind::InvalidField, "negative \"timestamp\"".into()));
    }
    Ok(event)
}

/// Parses newline-delimited eCAR JSON. Bad lines are reported, never fatal.
/// Timestamps may be integer milliseconds or RFC 3339 strings.
pub fn parse_events(reader: impl BufRead) -> Result<ParseReport> {
    let mut report = ParseReport::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let issue = |kind, message| ParseIssue {
            line: idx + 1,
            kind,
            message,
        };
        match serde_json::from_str::<Value>(trimmed) {
            Err(e) => report.issues.push(issue(IssueKind::MalformedJson, e.to_string())),
            Ok(value) => match parse_record(value) {
                Ok(event) => report.events.push(event),
                Err((kind, message)) => report.issues.push(issue(kind, message)),
            },
        }
    }
    Ok(report)
}

/// Opens a file (gzip-compressed or plain, detected by magic bytes) or
/// stdin for `-`.
pub fn open_input(path: impl AsRef<Path>) -> Result<Box<dyn BufRead>> {
    let path = path.as_ref();
    let raw: Box<dyn Read> = if path == Path::new("-") {
        Box::new(io::stdin())
    } else {
        Box::new(File::open(path)?)
    };
    let mut buffered = BufReader::new(raw);
    let gz = buffered.fill_buf()?.starts_with(&[0x1f, 0x8b]);
    Ok(if gz {
        Box::new(BufReader::new(MultiGzDecoder::new(buffered)))
    } else {
        Box::new(buffered)
    })
}
