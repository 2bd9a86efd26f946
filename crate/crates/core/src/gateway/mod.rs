//! Provider boundary for chat completion and text embedding.
//!
//! Every model call in the crate goes through [`ChatProvider`] or
//! [`Embedder`]. Implementations:
//!
//! - [`HttpChat`] / [`HttpEmbedder`]: OpenAI-compatible chat completions and
//!   the `/embed` service, with retry and exponential backoff.
//! - [`CachedChat`]: content-addressed response cache in front of any provider.
//! - [`TranscriptChat`]: replays a recorded transcript, matching by request digest.
//! - [`ScriptedChat`]: per-tag reply queues for unit tests.
//! - [`DictionaryEmbedder`]: fixed text → vector table.

mod cache;
mod http;
mod mock;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CachedChat, ResponseCache};
pub use http::{HttpChat, HttpEmbedder, RetryPolicy, ENV_API_KEY, ENV_CHAT_URL, ENV_EMBED_URL};
pub use mock::{
    CountingChat, DictionaryEmbedder, RecordingChat, ScriptedChat, TranscriptChat, TranscriptEntry,
};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unscripted request (tag `{tag}`, digest {digest})")]
    Unscripted { tag: String, digest: String },
    #[error("no embedding for text `{0}`")]
    UnknownText(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot decode provider response: {0}")]
    Decode(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    /// Call-site label used for transcript diagnostics. Not part of the cache key.
    pub request_tag: String,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.messages.first() {
            None => return Err(GatewayError::InvalidRequest("no messages".into())),
            Some(m) if m.role == Role::Assistant => {
                return Err(GatewayError::InvalidRequest(
                    "first message must be system or user".into(),
                ))
            }
            _ => {}
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == Some(0) {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: String,
    #[serde(default)]
    pub usage: Usage,
}

impl ChatResponse {
    pub fn stop(text: impl Into<String>) -> Self {
        ChatResponse {
            text: text.into(),
            finish_reason: "stop".into(),
            usage: Usage::default(),
        }
    }
}

/// Chat completion provider. Implementations are safe to share across threads.
pub trait ChatProvider: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

impl<T: ChatProvider + ?Sized> ChatProvider for &T {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).chat(request)
    }
}

impl<T: ChatProvider + ?Sized> ChatProvider for Box<T> {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).chat(request)
    }
}

impl<T: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<T> {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).chat(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dim: usize,
    pub model_tag: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, model_tag: impl Into<String>) -> Result<Self, GatewayError> {
        if values.is_empty() {
            return Err(GatewayError::Integrity("empty embedding".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(GatewayError::Integrity(format!("non-finite component {bad}")));
        }
        Ok(EmbeddingVector {
            dim: values.len(),
            values,
            model_tag: model_tag.into(),
        })
    }
}

/// Text embedding provider. One vector per input, in input order.
pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError>;

    /// Identifies the model and pooling behind the vectors.
    fn model_tag(&self) -> String;
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        (**self).embed(texts)
    }
    fn model_tag(&self) -> String {
        (**self).model_tag()
    }
}

impl<T: Embedder + ?Sized> Embedder for Box<T> {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        (**self).embed(texts)
    }
    fn model_tag(&self) -> String {
        (**self).model_tag()
    }
}

pub(crate) fn check_embed_input(texts: &[String]) -> Result<(), GatewayError> {
    if texts.is_empty() {
        return Err(GatewayError::InvalidRequest("no texts to embed".into()));
    }
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(GatewayError::InvalidRequest("cannot embed empty text".into()));
    }
    Ok(())
}

pub(crate) fn check_batch_dims(vectors: &[EmbeddingVector]) -> Result<(), GatewayError> {
    if let Some(first) = vectors.first() {
        if let Some(v) = vectors.iter().find(|v| v.dim != first.dim || v.values.len() != v.dim) {
            return Err(GatewayError::Integrity(format!(
                "dimension mismatch in batch: {} vs {}",
                first.dim, v.dim
            )));
        }
    }
    Ok(())
}

/// Hex digest of a request. Covers model, temperature, messages and
/// max_tokens; the request tag is excluded.
pub fn cache_key(request: &ChatRequest) -> String {
    #[derive(Serialize)]
    struct KeyMaterial<'a> {
        model: &'a str,
        temperature: f64,
        messages: &'a [ChatMessage],
        max_tokens: Option<u32>,
    }
    let material = KeyMaterial {
        model: &request.model,
        temperature: request.temperature,
        messages: &request.messages,
        max_tokens: request.max_tokens,
    };
    let bytes = serde_json::to_vec(&material).expect("request serializes");
    sha256_hex(&bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Short form for logs.
pub struct ShortDigest<'a>(pub &'a str);

impl fmt::Display for ShortDigest<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0[..self.0.len().min(12)])
    }
}
