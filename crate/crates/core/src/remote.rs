//! HTTP clients for an external text encoder and an external chat model.
//!
//! Encoder wire format: `GET {base}/dim -> {"dim": C}` once at startup, then
//! `POST {base}/embed {"texts": [...]} -> {"vectors": [[...], ...]}`.
//! Chat wire format: `POST {url} {"messages": [{"role", "content"}, ...]} -> {"content": "..."}`.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingError, FeatureVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("request failed: {0}")]
    Request(String),
    #[error("malformed response: {0}")]
    Decode(String),
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into()
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct DimResponse {
    dim: usize,
}

/// Text encoder behind an HTTP endpoint. Results are cached so a run is
/// reproducible given its cache.
pub struct RemoteEncoder {
    base_url: String,
    dim: usize,
    agent: ureq::Agent,
    cache: Mutex<HashMap<String, FeatureVector>>,
}

impl std::fmt::Debug for RemoteEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEncoder").field("base_url", &self.base_url).field("dim", &self.dim).finish()
    }
}

impl RemoteEncoder {
    /// Performs the dimension handshake.
    pub fn connect(base_url: &str, timeout: Duration) -> Result<Self, TransportError> {
        let base_url = base_url.trim_end_matches('/').to_string();
        let agent = agent(timeout);
        let dim: DimResponse = agent
            .get(&format!("{base_url}/dim"))
            .call()
            .map_err(|e| TransportError::Request(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::Decode(e.to_string()))?;
        Ok(Self { base_url, dim: dim.dim, agent, cache: Mutex::new(HashMap::new()) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, text: &str) -> Result<FeatureVector, EmbeddingError> {
        if let Some(v) = self.cache.lock().unwrap().get(text) {
            return Ok(v.clone());
        }
        let texts = [text];
        let response: EmbedResponse = self
            .agent
            .post(&format!("{}/embed", self.base_url))
            .send_json(EmbedRequest { texts: &texts })
            .map_err(|e| EmbeddingError::Remote(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| EmbeddingError::Remote(e.to_string()))?;
        let values = response
            .vectors
            .into_iter()
            .next()
            .ok_or_else(|| EmbeddingError::Remote("empty vector list".into()))?;
        if values.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch { left: values.len(), right: self.dim });
        }
        let v = FeatureVector::from_values(values);
        self.cache.lock().unwrap().insert(text.to_string(), v.clone());
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self { role: role.to_string(), content: content.into() }
    }
}

/// Anything that turns a conversation into the next assistant message.
pub trait ChatClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, TransportError>;
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct ChatResponse {
    content: String,
}

pub struct HttpChatClient {
    url: String,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(url: &str, timeout: Duration) -> Self {
        Self { url: url.to_string(), agent: agent(timeout) }
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, TransportError> {
        let response: ChatResponse = self
            .agent
            .post(&self.url)
            .send_json(ChatRequest { messages })
            .map_err(|e| TransportError::Request(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::Decode(e.to_string()))?;
        Ok(response.content)
    }
}
