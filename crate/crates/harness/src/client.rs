//! Chat-completion HTTP client for model and judge endpoints.

use std::time::{Duration, Instant};

use serde_json::{json, Value};
use thiserror::Error;
use xdialect_core::gapscope::{GapError, Judge, JudgeError};

use crate::config::ModelEndpoint;
use crate::prompt::Prompt;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChatError {
    /// Credentials missing or refused; retrying cannot help.
    #[error("{0}")]
    Auth(String),
    /// Network trouble, rate limiting or a server-side error.
    #[error("{0}")]
    Transient(String),
    /// The endpoint rejected the request or answered nonsense.
    #[error("{0}")]
    Fatal(String),
}

impl ChatError {
    pub fn is_transient(&self) -> bool {
        matches!(self, ChatError::Transient(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency_ms: f64,
}

/// Anything that turns a prompt into model text.
pub trait Completer: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, prompt: &Prompt) -> Result<Completion, ChatError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, backoff: Duration::from_millis(500) }
    }
}

pub struct ChatClient {
    endpoint: ModelEndpoint,
    url: String,
    token: Option<String>,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient").field("url", &self.url).field("model", &self.endpoint.model_id).finish()
    }
}

impl ChatClient {
    /// Resolve the token from the environment now, so a missing variable
    /// fails before any request is made.
    pub fn new(endpoint: &ModelEndpoint, retry: RetryPolicy) -> Result<Self, ChatError> {
        let token = match &endpoint.auth_env {
            None => None,
            Some(var) => match std::env::var(var) {
                Ok(t) if !t.is_empty() => Some(t),
                _ => {
                    return Err(ChatError::Auth(format!(
                        "environment variable {var} (token for '{}') is not set",
                        endpoint.model_id
                    )))
                }
            },
        };
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(endpoint.request_timeout_s.max(1))).build();
        Ok(ChatClient {
            url: format!("{}/chat/completions", endpoint.base_url.trim_end_matches('/')),
            endpoint: endpoint.clone(),
            token,
            agent,
            retry,
        })
    }

    fn body(&self, prompt: &Prompt) -> Value {
        let mut messages = Vec::new();
        if !prompt.system.is_empty() {
            messages.push(json!({"role": "system", "content": prompt.system}));
        }
        messages.push(json!({"role": "user", "content": prompt.user}));
        json!({
            "model": self.endpoint.request_model(),
            "messages": messages,
            "temperature": 0,
            "max_tokens": self.endpoint.max_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, ChatError> {
        let mut req = self.agent.post(&self.url).set("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        let resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, resp)) => {
                let detail: String = resp.into_string().unwrap_or_default().chars().take(300).collect();
                let what = format!("{} answered HTTP {code}: {}", self.url, detail.trim());
                return Err(match code {
                    401 | 403 => ChatError::Auth(match &self.endpoint.auth_env {
                        Some(var) => format!("{what} (check the token in {var})"),
                        None => format!("{what} (no auth_env is configured for '{}')", self.endpoint.model_id),
                    }),
                    408 | 409 | 425 | 429 | 500..=599 => ChatError::Transient(what),
                    _ => ChatError::Fatal(what),
                });
            }
            Err(e) => return Err(ChatError::Transient(format!("{}: {e}", self.url))),
        };
        let v: Value = resp.into_json().map_err(|e| ChatError::Transient(format!("unreadable response body: {e}")))?;
        let content = v.pointer("/choices/0/message/content").and_then(Value::as_str);
        content.map(str::to_string).ok_or_else(|| {
            let shown: String = v.to_string().chars().take(300).collect();
            ChatError::Fatal(format!("response has no choices[0].message.content: {shown}"))
        })
    }
}

impl Completer for ChatClient {
    fn model_id(&self) -> &str {
        &self.endpoint.model_id
    }

    /// Transient failures are retried with exponential backoff; latency is
    /// that of the successful attempt.
    fn complete(&self, prompt: &Prompt) -> Result<Completion, ChatError> {
        let body = self.body(prompt);
        let mut last = None;
        for attempt in 0..self.retry.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(self.retry.backoff * 2u32.saturating_pow(attempt - 1));
            }
            let started = Instant::now();
            match self.attempt(&body) {
                Ok(text) => return Ok(Completion { text, latency_ms: started.elapsed().as_secs_f64() * 1000.0 }),
                Err(e) if e.is_transient() => {
                    tracing::debug!(model = %self.endpoint.model_id, attempt, error = %e, "retrying");
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| ChatError::Transient("no attempt made".into())))
    }
}

/// Judge backed by a chat endpoint. The judge protocol is sent as a single
/// user message; retries are left to the classifier.
pub struct HttpJudge {
    client: ChatClient,
}

impl HttpJudge {
    pub fn new(endpoint: &ModelEndpoint) -> Result<Self, ChatError> {
        Ok(HttpJudge { client: ChatClient::new(endpoint, RetryPolicy { attempts: 1, backoff: Duration::ZERO })? })
    }
}

impl Judge for HttpJudge {
    fn judge(&self, _gap: &GapError, prompt: &str) -> Result<String, JudgeError> {
        let p = Prompt { system: String::new(), user: prompt.to_string() };
        match self.client.complete(&p) {
            Ok(c) => Ok(c.text),
            Err(ChatError::Transient(m)) => Err(JudgeError::Transient(m)),
            Err(e) => Err(JudgeError::Fatal(e.to_string())),
        }
    }
}
