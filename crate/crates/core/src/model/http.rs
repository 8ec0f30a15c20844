//! OpenAI-compatible chat-completions backend.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Backend, BackendError, ChatSession, ModelRequest};

pub const ENV_API_BASE: &str = "DEBIAS_API_BASE";
pub const ENV_API_KEY: &str = "DEBIAS_API_KEY";
pub const ENV_MODEL: &str = "DEBIAS_MODEL";

#[derive(Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub base_url: String,
    #[serde(skip_serializing)]
    pub api_key: String,
    pub model_name: String,
    /// Sampling temperature for Best-of-N candidates. Other roles run at 0.
    pub temperature: f64,
    pub request_timeout: Duration,
    pub max_retries: u32,
}

impl std::fmt::Debug for BackendConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &"<redacted>")
            .field("model_name", &self.model_name)
            .field("temperature", &self.temperature)
            .field("request_timeout", &self.request_timeout)
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:11434".into(),
            api_key: String::new(),
            model_name: String::new(),
            temperature: 0.7,
            request_timeout: Duration::from_secs(60),
            max_retries: 3,
        }
    }
}

impl BackendConfig {
    /// Defaults overridden by `DEBIAS_API_BASE`, `DEBIAS_API_KEY` and
    /// `DEBIAS_MODEL` when set.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        if let Ok(v) = std::env::var(ENV_API_BASE) {
            c.base_url = v;
        }
        if let Ok(v) = std::env::var(ENV_API_KEY) {
            c.api_key = v;
        }
        if let Ok(v) = std::env::var(ENV_MODEL) {
            c.model_name = v;
        }
        c
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout(String),
    Connect(String),
}

/// Sends one JSON POST. Swappable so the retry logic can be tested against
/// canned replies.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &str, timeout: Duration) -> Result<HttpReply, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().new_agent();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &str, timeout: Duration) -> Result<HttpReply, TransportError> {
        let result = self
            .agent
            .post(url)
            .config()
            .timeout_global(Some(timeout))
            .build()
            .header("Authorization", &format!("Bearer {bearer}"))
            .header("Content-Type", "application/json")
            .send(body);
        match result {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let body = resp.body_mut().read_to_string().map_err(|e| TransportError::Connect(e.to_string()))?;
                Ok(HttpReply { status, body })
            }
            Err(ureq::Error::Timeout(t)) => Err(TransportError::Timeout(t.to_string())),
            Err(e) => Err(TransportError::Connect(e.to_string())),
        }
    }
}

/// Exponential backoff: `base * 2^attempt`, capped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub base: Duration,
    pub cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self { base: Duration::from_millis(500), cap: Duration::from_secs(8) }
    }
}

impl Backoff {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base.saturating_mul(factor).min(self.cap)
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub struct HttpBackend {
    name: String,
    config: BackendConfig,
    transport: Arc<dyn Transport>,
    backoff: Backoff,
    sleep: Sleeper,
}

impl HttpBackend {
    /// Fails with an auth error when no API key is configured.
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        Self::with_transport(config, Arc::new(UreqTransport::default()))
    }

    pub fn with_transport(config: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        if config.api_key.trim().is_empty() {
            return Err(BackendError::Auth(format!("missing API key (set {ENV_API_KEY})")));
        }
        if config.request_timeout.is_zero() {
            return Err(BackendError::Network("request timeout must be positive".into()));
        }
        Ok(Self {
            name: config.model_name.clone(),
            config,
            transport,
            backoff: Backoff::default(),
            sleep: Arc::new(std::thread::sleep),
        })
    }

    pub fn with_backoff(mut self, backoff: Backoff, sleep: Sleeper) -> Self {
        self.backoff = backoff;
        self.sleep = sleep;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn body(&self, request: &ModelRequest) -> String {
        serde_json::json!({
            "model": self.config.model_name,
            "messages": request.messages,
            "temperature": request.temperature,
        })
        .to_string()
    }

    /// Sends a request, retrying timeouts, connection failures, 429 and 5xx
    /// with exponential backoff. 401/403 fail at once.
    pub fn send(&self, request: &ModelRequest) -> Result<String, BackendError> {
        let url = self.config.endpoint();
        let body = self.body(request);
        let attempts = self.config.max_retries + 1;
        let mut last = BackendError::Network("no attempt made".into());
        for attempt in 0..attempts {
            if attempt > 0 {
                (self.sleep)(self.backoff.delay(attempt - 1));
            }
            match self.transport.post_json(&url, &self.config.api_key, &body, self.config.request_timeout) {
                Err(TransportError::Timeout(e)) => last = BackendError::Network(format!("timeout: {e}")),
                Err(TransportError::Connect(e)) => last = BackendError::Network(e),
                Ok(reply) => match reply.status {
                    200..=299 => return extract_content(&reply.body),
                    401 | 403 => return Err(BackendError::Auth(format!("HTTP {}", reply.status))),
                    429 => last = BackendError::RateLimited { attempts: attempt + 1 },
                    500..=599 => last = BackendError::Network(format!("HTTP {}", reply.status)),
                    status => {
                        return Err(BackendError::Network(format!("HTTP {status}: {}", truncate(&reply.body))));
                    }
                },
            }
            log::debug!("request attempt {} failed: {last}", attempt + 1);
        }
        Err(last)
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

/// Reads `choices[0].message.content` from a chat-completions body.
pub fn extract_content(body: &str) -> Result<String, BackendError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| BackendError::MalformedResponse(format!("invalid JSON: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))
}

struct HttpSession<'a> {
    backend: &'a HttpBackend,
}

impl ChatSession for HttpSession<'_> {
    fn complete(&mut self, request: &ModelRequest) -> Result<String, BackendError> {
        self.backend.send(request)
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn open_session(&self) -> Box<dyn ChatSession + '_> {
        Box::new(HttpSession { backend: self })
    }
}
