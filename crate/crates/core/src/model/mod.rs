//! Generator and judge access.
//!
//! Backends only move text: a [`ModelRequest`] goes in, the raw reply comes
//! out. Prompt construction, reply parsing, retries and cost metering live in
//! the role wrappers ([`Generator`], [`Judge`]) so the mock and HTTP backends
//! behave identically above the transport.

mod constitution;
pub mod http;
pub mod mock;
pub mod parse;
pub mod prompts;
mod roles;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use constitution::Constitution;
pub use parse::{AuditResult, GateVerdict, ParseError};
pub use roles::{Charge, Generator, Judge, Meter, RoleTemperatures};

/// The interaction a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generate,
    Candidate,
    Revise,
    Audit,
    Gate,
    ScoreWord,
    ScoreText,
    Critique,
}

/// Which model pays for a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Generator,
    Judge,
}

impl Role {
    pub const ALL: [Role; 8] = [
        Role::Generate,
        Role::Candidate,
        Role::Revise,
        Role::Audit,
        Role::Gate,
        Role::ScoreWord,
        Role::ScoreText,
        Role::Critique,
    ];

    pub fn side(self) -> Side {
        match self {
            Role::Generate | Role::Candidate | Role::Revise | Role::Audit | Role::Gate => Side::Generator,
            Role::ScoreWord | Role::ScoreText | Role::Critique => Side::Judge,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Generate => "generate",
            Role::Candidate => "candidate",
            Role::Revise => "revise",
            Role::Audit => "audit",
            Role::Gate => "gate",
            Role::ScoreWord => "score_word",
            Role::ScoreText => "score_text",
            Role::Critique => "critique",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Separator between the fields of a request key.
pub const KEY_SEPARATOR: &str = " | ";

/// Builds the lookup key for a request from its semantic inputs
/// (context, or context and word, or the full passage).
pub fn request_key(parts: &[&str]) -> String {
    parts.join(KEY_SEPARATOR)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub role: Role,
    /// Normalised semantic inputs; what the mock backend matches on.
    pub key: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ModelRequest {
    /// Content of the last user message.
    pub fn prompt(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == "user").map(|m| m.content.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("no scripted response for role '{role}' and key '{key}'")]
    ScriptMiss { role: Role, key: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

/// A conversation channel to one model. Calls within a session are
/// sequential; every run opens its own session.
pub trait ChatSession: Send {
    fn complete(&mut self, request: &ModelRequest) -> Result<String, BackendError>;
}

/// Shared handle that hands out sessions to concurrent runs.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn open_session(&self) -> Box<dyn ChatSession + '_>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("generator reply contained no word: {0:?}")]
    GenerationEmpty(String),
    #[error("judge reply unparseable after {attempts} attempts: {last}")]
    JudgeParseFailure { attempts: u32, last: ParseError },
}

impl ModelError {
    /// Short machine-readable class name.
    pub fn kind(&self) -> &'static str {
        match self {
            ModelError::Backend(BackendError::ScriptMiss { .. }) => "ScriptMiss",
            ModelError::Backend(BackendError::Network(_)) => "NetworkError",
            ModelError::Backend(BackendError::Auth(_)) => "AuthError",
            ModelError::Backend(BackendError::RateLimited { .. }) => "RateLimited",
            ModelError::Backend(BackendError::MalformedResponse(_)) => "MalformedResponse",
            ModelError::GenerationEmpty(_) => "GenerationEmpty",
            ModelError::JudgeParseFailure { .. } => "JudgeParseFailure",
        }
    }
}
