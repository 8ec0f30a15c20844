//! Parsers for raw model replies.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::JudgeScore;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum ParseError {
    #[error("no JSON object found in reply")]
    NoJsonFound,
    #[error("missing or non-numeric field '{0}'")]
    MissingField(String),
    #[error("field '{field}' = {value} is outside [0, 1]")]
    OutOfRange { field: String, value: f64 },
    #[error("audit flags a violation without a reason")]
    MissingReason,
    #[error("gate reply is neither YES nor NO: {0:?}")]
    GateUnrecognised(String),
}

/// Pulls a single word out of a generator reply: the first whitespace
/// delimited token with surrounding punctuation and quotes removed. Internal
/// hyphens and apostrophes survive.
pub fn extract_word(reply: &str) -> Option<String> {
    let token = reply.split_whitespace().next()?;
    let word = token.trim_matches(|c: char| !c.is_alphanumeric());
    if word.is_empty() {
        None
    } else {
        Some(word.to_string())
    }
}

/// The first parseable JSON object in `raw`, skipping any chatter or code
/// fences around it.
pub fn first_json_object(raw: &str) -> Option<Map<String, Value>> {
    raw.char_indices().filter(|(_, c)| *c == '{').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => Some(map),
            _ => None,
        }
    })
}

fn unit_field(map: &Map<String, Value>, field: &str) -> Result<f64, ParseError> {
    let value = map.get(field).and_then(Value::as_f64).ok_or_else(|| ParseError::MissingField(field.to_string()))?;
    if !(0.0..=1.0).contains(&value) {
        return Err(ParseError::OutOfRange { field: field.to_string(), value });
    }
    Ok(value)
}

pub fn parse_judge_response(raw: &str) -> Result<JudgeScore, ParseError> {
    let map = first_json_object(raw).ok_or(ParseError::NoJsonFound)?;
    let bias = unit_field(&map, "bias")?;
    let utility = unit_field(&map, "utility")?;
    Ok(JudgeScore::new(bias, utility).expect("fields checked above"))
}

/// Serialises a score in the judge's reply format.
pub fn render_judge_response(score: &JudgeScore) -> String {
    serde_json::json!({ "bias": score.bias(), "utility": score.utility() }).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub fired: bool,
    /// The reply was unrecognised and the gate fired by default.
    pub parse_failure: bool,
}

/// Reads the first alphabetic token of a gate reply. `yes` fires, `no`
/// passes, anything else is a parse error.
pub fn parse_gate_response(raw: &str) -> Result<bool, ParseError> {
    let token: String = raw.chars().skip_while(|c| !c.is_alphabetic()).take_while(|c| c.is_alphabetic()).collect();
    match token.to_lowercase().as_str() {
        "yes" => Ok(true),
        "no" => Ok(false),
        _ => Err(ParseError::GateUnrecognised(raw.chars().take(80).collect())),
    }
}

/// Gate parsing with the fail-safe: unrecognised replies fire the gate.
pub fn gate_verdict(raw: &str) -> GateVerdict {
    match parse_gate_response(raw) {
        Ok(fired) => GateVerdict { fired, parse_failure: false },
        Err(_) => GateVerdict { fired: true, parse_failure: true },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditResult {
    pub violates: bool,
    pub principle: Option<String>,
    pub reason: Option<String>,
}

impl AuditResult {
    pub fn clean() -> Self {
        Self { violates: false, principle: None, reason: None }
    }
}

fn optional_text(map: &Map<String, Value>, field: &str) -> Option<String> {
    map.get(field)
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("null"))
        .map(str::to_string)
}

pub fn parse_audit_response(raw: &str) -> Result<AuditResult, ParseError> {
    let map = first_json_object(raw).ok_or(ParseError::NoJsonFound)?;
    let violates = match map.get("violates") {
        Some(Value::Bool(b)) => *b,
        Some(Value::String(s)) if s.eq_ignore_ascii_case("true") => true,
        Some(Value::String(s)) if s.eq_ignore_ascii_case("false") => false,
        _ => return Err(ParseError::MissingField("violates".into())),
    };
    let principle = optional_text(&map, "principle");
    let reason = optional_text(&map, "reason");
    if violates && reason.is_none() {
        return Err(ParseError::MissingReason);
    }
    Ok(AuditResult { violates, principle, reason })
}
