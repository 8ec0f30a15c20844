//! Scripted backend used as a deterministic test oracle.
//!
//! A script maps `role -> key -> reply`. A reply is either one string,
//! returned on every call, or a list consumed in order whose last element
//! repeats once the list runs out. The key `*` is a per-role fallback whose
//! list advances across every key it answers. Any other unmatched request
//! is a [`BackendError::ScriptMiss`].
//!
//! On disk a script is pretty-printed JSON with sorted keys:
//!
//! ```json
//! {
//!   "generate": { "The surgeon said ___": "him" },
//!   "revise": { "The surgeon said ___ | him": ["her", "they"] }
//! }
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::parse::render_judge_response;
use super::{request_key, Backend, BackendError, ChatSession, ModelRequest, Role, Side};
use crate::JudgeScore;

pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reply {
    Always(String),
    Sequence(Vec<String>),
}

impl Reply {
    fn at(&self, call: usize) -> Option<&str> {
        match self {
            Reply::Always(s) => Some(s),
            Reply::Sequence(v) => v.get(call).or_else(|| v.last()).map(String::as_str),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("script io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("script format error: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(flatten)]
    entries: BTreeMap<Role, BTreeMap<String, Reply>>,
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, role: Role, key: impl Into<String>, reply: Reply) -> &mut Self {
        self.entries.entry(role).or_default().insert(key.into(), reply);
        self
    }

    pub fn on(mut self, role: Role, key: impl Into<String>, reply: impl Into<String>) -> Self {
        self.set(role, key, Reply::Always(reply.into()));
        self
    }

    pub fn on_seq<I, S>(mut self, role: Role, key: impl Into<String>, replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.set(role, key, Reply::Sequence(replies.into_iter().map(Into::into).collect()));
        self
    }

    /// Scripts a judge word score for `(context, word)`.
    pub fn score(self, context: &str, word: &str, bias: f64, utility: f64) -> Self {
        let score = JudgeScore::new(bias, utility).expect("scripted score in [0, 1]");
        self.on(Role::ScoreWord, request_key(&[context, word]), render_judge_response(&score))
    }

    /// Scripts a gate reply for `(context, word)`.
    pub fn gate(self, context: &str, word: &str, reply: &str) -> Self {
        self.on(Role::Gate, request_key(&[context, word]), reply)
    }

    pub fn lookup(&self, role: Role, key: &str) -> Option<&Reply> {
        self.resolve(role, key).map(|(_, reply)| reply)
    }

    /// The script entry answering `key`: the exact key, else the wildcard.
    fn resolve(&self, role: Role, key: &str) -> Option<(&str, &Reply)> {
        let by_key = self.entries.get(&role)?;
        by_key.get_key_value(key).or_else(|| by_key.get_key_value(WILDCARD)).map(|(k, r)| (k.as_str(), r))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().all(BTreeMap::is_empty)
    }

    pub fn from_json_str(s: &str) -> Result<Self, ScriptError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("script serialises");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScriptError> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

/// One session over a script: its own sequence cursors and request log.
#[derive(Debug)]
pub struct MockSession {
    script: Arc<MockScript>,
    cursors: HashMap<(Role, String), usize>,
    log: Vec<ModelRequest>,
}

impl MockSession {
    pub fn new(script: Arc<MockScript>) -> Self {
        Self { script, cursors: HashMap::new(), log: Vec::new() }
    }

    pub fn from_script(script: MockScript) -> Self {
        Self::new(Arc::new(script))
    }

    /// Every request seen, in order.
    pub fn log(&self) -> &[ModelRequest] {
        &self.log
    }

    pub fn requests_on(&self, side: Side) -> usize {
        self.log.iter().filter(|r| r.role.side() == side).count()
    }

    pub fn requests_for(&self, role: Role) -> usize {
        self.log.iter().filter(|r| r.role == role).count()
    }
}

impl ChatSession for MockSession {
    fn complete(&mut self, request: &ModelRequest) -> Result<String, BackendError> {
        self.log.push(request.clone());
        let miss = || BackendError::ScriptMiss { role: request.role, key: request.key.clone() };
        let (entry, reply) = self.script.resolve(request.role, &request.key).ok_or_else(miss)?;
        // sequences advance per script entry, so a wildcard list is consumed
        // across whatever keys it answers
        let cursor = self.cursors.entry((request.role, entry.to_string())).or_insert(0);
        let text = reply.at(*cursor).ok_or_else(miss)?.to_string();
        *cursor += 1;
        Ok(text)
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    name: String,
    script: Arc<MockScript>,
}

impl MockBackend {
    pub fn new(name: impl Into<String>, script: MockScript) -> Self {
        Self { name: name.into(), script: Arc::new(script) }
    }

    pub fn session(&self) -> MockSession {
        MockSession::new(Arc::clone(&self.script))
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn open_session(&self) -> Box<dyn ChatSession + '_> {
        Box::new(self.session())
    }
}
