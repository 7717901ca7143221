//! Chat-completion transports: live HTTP, canned replies for tests, and
//! wrappers that count or refuse calls.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::json;

/// Pipeline stage a request belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Strategy,
    PlanningFunction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChatRequest {
    pub stage: Stage,
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("network access refused in offline mode")]
    Refused,
    #[error("api key variable {0} is not set")]
    MissingKey(String),
    #[error("http request failed: {0}")]
    Http(String),
    #[error("unexpected response body: {0}")]
    Body(String),
    #[error("stub transport has no reply left")]
    Exhausted,
}

pub trait Transport {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, TransportError>;
}

/// Request/response shape of the HTTP endpoint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiStyle {
    /// `{model, max_tokens, messages}` answered by `content[0].text`.
    #[default]
    Messages,
    /// `{model, messages}` answered by `choices[0].message.content`.
    ChatCompletions,
}

/// Live transport over HTTPS.
pub struct HttpTransport {
    endpoint: String,
    api_key: String,
    style: ApiStyle,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: &str, api_key_env: &str, style: ApiStyle) -> Result<Self, TransportError> {
        let api_key =
            std::env::var(api_key_env).map_err(|_| TransportError::MissingKey(api_key_env.to_string()))?;
        let agent = ureq::AgentBuilder::new().timeout(std::time::Duration::from_secs(300)).build();
        Ok(Self { endpoint: endpoint.to_string(), api_key, style, agent })
    }

    // both styles accept the same single-turn body
    fn body(&self, req: &ChatRequest) -> serde_json::Value {
        json!({
            "model": req.model,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
            "messages": [{ "role": "user", "content": req.prompt }],
        })
    }
}

/// Pulls the completion text out of a response body.
pub fn extract_text(style: ApiStyle, body: &serde_json::Value) -> Result<String, TransportError> {
    let text = match style {
        ApiStyle::Messages => body["content"]
            .as_array()
            .map(|blocks| blocks.iter().filter_map(|b| b["text"].as_str()).collect::<Vec<_>>().join("")),
        ApiStyle::ChatCompletions => body["choices"][0]["message"]["content"].as_str().map(str::to_string),
    };
    text.filter(|t| !t.is_empty()).ok_or_else(|| TransportError::Body(body.to_string()))
}

impl Transport for HttpTransport {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, TransportError> {
        let mut call = self.agent.post(&self.endpoint).set("content-type", "application/json");
        call = match self.style {
            ApiStyle::Messages => {
                call.set("x-api-key", &self.api_key).set("anthropic-version", "2023-06-01")
            }
            ApiStyle::ChatCompletions => call.set("authorization", &format!("Bearer {}", self.api_key)),
        };
        let resp = call.send_json(self.body(req)).map_err(|e| TransportError::Http(e.to_string()))?;
        let body: serde_json::Value = resp.into_json().map_err(|e| TransportError::Body(e.to_string()))?;
        extract_text(self.style, &body)
    }
}

/// Replays canned completions in order and records the prompts it saw.
#[derive(Clone, Debug, Default)]
pub struct StubTransport {
    replies: VecDeque<String>,
    pub seen: Vec<ChatRequest>,
}

impl StubTransport {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self { replies: replies.into_iter().map(Into::into).collect(), seen: Vec::new() }
    }
}

impl Transport for StubTransport {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, TransportError> {
        self.seen.push(req.clone());
        self.replies.pop_front().ok_or(TransportError::Exhausted)
    }
}

/// Counts attempted and successful calls per stage.
pub struct CountingTransport<T> {
    pub inner: T,
    pub attempts: BTreeMap<Stage, usize>,
    pub successes: BTreeMap<Stage, usize>,
}

impl<T> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self { inner, attempts: BTreeMap::new(), successes: BTreeMap::new() }
    }

    pub fn successes(&self, stage: Stage) -> usize {
        self.successes.get(&stage).copied().unwrap_or(0)
    }

    pub fn total_attempts(&self) -> usize {
        self.attempts.values().sum()
    }
}

impl<T: Transport> Transport for CountingTransport<T> {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, TransportError> {
        *self.attempts.entry(req.stage).or_default() += 1;
        let out = self.inner.complete(req)?;
        *self.successes.entry(req.stage).or_default() += 1;
        Ok(out)
    }
}

/// Fails every call; used to prove a workflow never touches the network.
#[derive(Clone, Debug, Default)]
pub struct RefusingTransport {
    pub attempts: usize,
}

impl Transport for RefusingTransport {
    fn complete(&mut self, _req: &ChatRequest) -> Result<String, TransportError> {
        self.attempts += 1;
        Err(TransportError::Refused)
    }
}
