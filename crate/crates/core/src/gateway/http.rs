use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    check_batch_dims, check_embed_input, ChatMessage, ChatProvider, ChatRequest, ChatResponse,
    Embedder, EmbeddingVector, GatewayError, Usage,
};

pub const ENV_API_KEY: &str = "THOUGHT_GRAPH_API_KEY";
pub const ENV_CHAT_URL: &str = "THOUGHT_GRAPH_CHAT_URL";
pub const ENV_EMBED_URL: &str = "THOUGHT_GRAPH_EMBED_URL";

const DEFAULT_CHAT_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
            timeout: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

enum Failure {
    Retryable(String),
    Fatal(GatewayError),
}

fn is_retryable_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

/// POST `body` as JSON, retrying timeouts, connection failures, 429 and 5xx.
fn post_with_retry<B: Serialize>(
    client: &reqwest::blocking::Client,
    url: &str,
    bearer: Option<&str>,
    body: &B,
    policy: &RetryPolicy,
) -> Result<String, GatewayError> {
    let attempts = policy.max_attempts.max(1);
    let mut last = String::new();
    for attempt in 1..=attempts {
        let mut builder = client.post(url).json(body);
        if let Some(key) = bearer {
            builder = builder.bearer_auth(key);
        }
        let outcome = match builder.send() {
            Ok(resp) => {
                let status = resp.status().as_u16();
                let text = resp.text().unwrap_or_default();
                if (200..300).contains(&status) {
                    return Ok(text);
                } else if is_retryable_status(status) {
                    Failure::Retryable(format!("status {status}"))
                } else {
                    Failure::Fatal(GatewayError::Status { status, body: text })
                }
            }
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                Failure::Retryable(e.to_string())
            }
            Err(e) => Failure::Fatal(GatewayError::Transport {
                attempts: attempt,
                message: e.to_string(),
            }),
        };
        match outcome {
            Failure::Fatal(e) => return Err(e),
            Failure::Retryable(msg) => {
                log::warn!("{url}: attempt {attempt}/{attempts} failed: {msg}");
                last = msg;
                if attempt < attempts {
                    std::thread::sleep(policy.delay(attempt));
                }
            }
        }
    }
    Err(GatewayError::Transport {
        attempts,
        message: last,
    })
}

fn client(policy: &RetryPolicy) -> Result<reqwest::blocking::Client, GatewayError> {
    reqwest::blocking::Client::builder()
        .timeout(policy.timeout)
        .build()
        .map_err(|e| GatewayError::Config(e.to_string()))
}

/// OpenAI-compatible chat completions client.
pub struct HttpChat {
    base_url: String,
    api_key: String,
    policy: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpChat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChat")
            .field("base_url", &self.base_url)
            .field("policy", &self.policy)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

impl HttpChat {
    pub fn new(
        base_url: impl Into<String>,
        api_key: impl Into<String>,
        policy: RetryPolicy,
    ) -> Result<Self, GatewayError> {
        let api_key = api_key.into();
        if api_key.trim().is_empty() {
            return Err(GatewayError::Config("empty API key".into()));
        }
        Ok(HttpChat {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            client: client(&policy)?,
            policy,
        })
    }

    /// Credentials from `THOUGHT_GRAPH_API_KEY` (or `OPENAI_API_KEY`); base URL
    /// from `base_url`, then `THOUGHT_GRAPH_CHAT_URL` / `OPENAI_BASE_URL`.
    pub fn from_env(base_url: Option<String>, policy: RetryPolicy) -> Result<Self, GatewayError> {
        let key = std::env::var(ENV_API_KEY)
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .map_err(|_| {
                GatewayError::Config(format!(
                    "no API key: set {ENV_API_KEY} or use a transcript"
                ))
            })?;
        let url = base_url
            .or_else(|| std::env::var(ENV_CHAT_URL).ok())
            .or_else(|| std::env::var("OPENAI_BASE_URL").ok())
            .unwrap_or_else(|| DEFAULT_CHAT_URL.to_string());
        Self::new(url, key, policy)
    }
}

fn parse_chat_reply(body: &str) -> Result<ChatResponse, GatewayError> {
    let v: Value = serde_json::from_str(body).map_err(|e| GatewayError::Decode(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| GatewayError::Decode("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let finish_reason = choice
        .get("finish_reason")
        .and_then(Value::as_str)
        .unwrap_or("unknown")
        .to_string();
    let usage = Usage {
        prompt_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: v
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    };
    if text.is_empty() && finish_reason == "stop" {
        return Err(GatewayError::Decode("empty completion with normal finish".into()));
    }
    Ok(ChatResponse {
        text,
        finish_reason,
        usage,
    })
}

impl ChatProvider for HttpChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let body = WireRequest {
            model: &request.model,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let url = format!("{}/chat/completions", self.base_url);
        let text = post_with_retry(&self.client, &url, Some(&self.api_key), &body, &self.policy)?;
        parse_chat_reply(&text)
    }
}

/// Client for the `/embed` service.
#[derive(Debug)]
pub struct HttpEmbedder {
    base_url: String,
    policy: RetryPolicy,
    client: reqwest::blocking::Client,
    tag: std::sync::Mutex<Option<String>>,
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedReply {
    vectors: Vec<Vec<f64>>,
    dim: usize,
    model: String,
}

impl HttpEmbedder {
    pub fn new(base_url: impl Into<String>, policy: RetryPolicy) -> Result<Self, GatewayError> {
        Ok(HttpEmbedder {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client: client(&policy)?,
            policy,
            tag: std::sync::Mutex::new(None),
        })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        check_embed_input(texts)?;
        let url = format!("{}/embed", self.base_url);
        let body = post_with_retry(&self.client, &url, None, &EmbedBody { texts }, &self.policy)?;
        let reply: EmbedReply =
            serde_json::from_str(&body).map_err(|e| GatewayError::Decode(e.to_string()))?;
        if reply.vectors.len() != texts.len() {
            return Err(GatewayError::Integrity(format!(
                "{} vectors for {} texts",
                reply.vectors.len(),
                texts.len()
            )));
        }
        let out = reply
            .vectors
            .into_iter()
            .map(|v| {
                if v.len() != reply.dim {
                    return Err(GatewayError::Integrity(format!(
                        "vector of length {} but dim {}",
                        v.len(),
                        reply.dim
                    )));
                }
                EmbeddingVector::new(v, reply.model.clone())
            })
            .collect::<Result<Vec<_>, _>>()?;
        check_batch_dims(&out)?;
        *self.tag.lock().expect("tag lock") = Some(reply.model);
        Ok(out)
    }

    fn model_tag(&self) -> String {
        self.tag
            .lock()
            .expect("tag lock")
            .clone()
            .unwrap_or_else(|| format!("http:{}", self.base_url))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
            timeout: Duration::from_secs(1),
        };
        assert_eq!(p.delay(1), Duration::from_millis(100));
        assert_eq!(p.delay(2), Duration::from_millis(200));
        assert_eq!(p.delay(3), Duration::from_millis(350));
    }

    #[test]
    fn parses_openai_shape() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"DNA repair"},
            "finish_reason":"stop"}],"usage":{"prompt_tokens":12,"completion_tokens":3}}"#;
        let r = parse_chat_reply(body).unwrap();
        assert_eq!(r.text, "DNA repair");
        assert_eq!(r.usage.prompt_tokens, 12);
        assert!(parse_chat_reply(r#"{"choices":[]}"#).is_err());
    }

    #[test]
    fn empty_key_is_config_error() {
        assert!(matches!(
            HttpChat::new("http://localhost", "", RetryPolicy::default()),
            Err(GatewayError::Config(_))
        ));
    }
}
