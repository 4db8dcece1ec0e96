//! Chat client for OpenAI-compatible vision endpoints.
//!
//! [`VlmClient`] wraps a [`ChatBackend`] (HTTP or the in-process mock) with a
//! content-addressed response cache, exponential-backoff retries and a bound
//! on in-flight requests.

mod cache;
mod http;
mod mock;
mod retry;

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::image_ops::{PreprocessSpec, RasterImage};

pub use cache::{CachedResponse, ResponseCache};
pub use http::{build_request_body, HttpBackend};
pub use mock::{MockBackend, MockItem, MockRule};
pub use retry::{Clock, RetryPolicy, SystemClock, VirtualClock};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub temperature: f32,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_max_tokens() -> u32 {
    512
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_max_retries() -> u32 {
    5
}
fn default_parallelism() -> usize {
    4
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env: default_api_key_env(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            parallelism: default_parallelism(),
        }
    }

    /// Config for an in-process mock; the URL is never contacted.
    pub fn mock(model_name: impl Into<String>) -> Self {
        Self::new("mock://local", model_name)
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.model_name.trim().is_empty() {
            return Err(ClientError::Config("model_name is empty".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(ClientError::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.parallelism == 0 {
            return Err(ClientError::Config("parallelism must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
    /// Attachments; only user turns carry images.
    pub images: Vec<RasterImage>,
}

impl ChatTurn {
    pub fn system(text: impl Into<String>) -> Self {
        Self { role: Role::System, text: text.into(), images: Vec::new() }
    }

    pub fn user(text: impl Into<String>, images: Vec<RasterImage>) -> Self {
        Self { role: Role::User, text: text.into(), images }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: Role::Assistant, text: text.into(), images: Vec::new() }
    }
}

/// Side information for in-process backends. Never sent over the wire and
/// never part of the cache key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RequestContext {
    pub item_id: Option<String>,
    pub preprocess: Option<PreprocessSpec>,
}

pub struct ChatRequest<'a> {
    pub config: &'a EndpointConfig,
    pub turns: &'a [ChatTurn],
    pub context: &'a RequestContext,
}

impl ChatRequest<'_> {
    pub fn last_user_text(&self) -> Option<&str> {
        self.turns.iter().rev().find(|t| t.role == Role::User).map(|t| t.text.as_str())
    }

    /// Most recently attached image in the conversation.
    pub fn latest_image(&self) -> Option<&RasterImage> {
        self.turns.iter().rev().find_map(|t| t.images.last())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// 429, 5xx or timeout: worth retrying.
    Transient(String),
    Auth { status: u16, message: String },
    Request { status: u16, message: String },
    Transport(String),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<Completion, BackendError>;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("authentication rejected (HTTP {status}): {message}")]
    Auth { status: u16, message: String },
    #[error("request rejected (HTTP {status}): {message}")]
    Request { status: u16, message: String },
    #[error("gave up after {attempts} attempts: {last}")]
    ExhaustedRetries { attempts: u32, last: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("invalid chat: {0}")]
    InvalidChat(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub from_cache: bool,
    pub latency_ms: u64,
    pub attempts: u32,
    pub cache_key: String,
}

/// Stable key over the model name and the conversation, with images reduced
/// to their pixel-content hashes.
pub fn cache_key(model_name: &str, turns: &[ChatTurn]) -> String {
    #[derive(Serialize)]
    struct KeyTurn<'a> {
        role: &'a str,
        text: &'a str,
        images: Vec<String>,
    }
    let turns: Vec<KeyTurn<'_>> = turns
        .iter()
        .map(|t| KeyTurn { role: t.role.as_str(), text: &t.text, images: t.images.iter().map(RasterImage::content_hash).collect() })
        .collect();
    let canonical = serde_json::to_vec(&(model_name, turns)).expect("key serialization is infallible");
    hex::encode(Sha256::digest(canonical))
}

struct Admission {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl Admission {
    fn new(limit: usize) -> Self {
        Self { slots: Mutex::new(limit.max(1)), freed: Condvar::new() }
    }

    fn acquire(&self) -> AdmissionGuard<'_> {
        let mut slots = self.slots.lock().expect("admission lock poisoned");
        while *slots == 0 {
            slots = self.freed.wait(slots).expect("admission lock poisoned");
        }
        *slots -= 1;
        AdmissionGuard(self)
    }
}

struct AdmissionGuard<'a>(&'a Admission);

impl Drop for AdmissionGuard<'_> {
    fn drop(&mut self) {
        *self.0.slots.lock().expect("admission lock poisoned") += 1;
        self.0.freed.notify_one();
    }
}

pub struct VlmClient {
    config: EndpointConfig,
    backend: Arc<dyn ChatBackend>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    clock: Arc<dyn Clock>,
    admission: Admission,
}

impl VlmClient {
    pub fn new(config: EndpointConfig, backend: Arc<dyn ChatBackend>) -> Result<Self, ClientError> {
        config.validate()?;
        Ok(Self {
            retry: RetryPolicy::new(config.max_retries),
            admission: Admission::new(config.parallelism),
            config,
            backend,
            cache: None,
            clock: Arc::new(SystemClock),
        })
    }

    /// Real HTTP client for `config.base_url`.
    pub fn http(config: EndpointConfig) -> Result<Self, ClientError> {
        let backend = HttpBackend::new(Duration::from_secs(config.timeout_secs))?;
        Self::new(config, Arc::new(backend))
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn model_name(&self) -> &str {
        &self.config.model_name
    }

    pub fn send_chat(&self, turns: &[ChatTurn], context: &RequestContext) -> Result<ChatResponse, ClientError> {
        if !turns.iter().any(|t| t.role == Role::User) {
            return Err(ClientError::InvalidChat("at least one user turn is required".into()));
        }
        if turns.iter().any(|t| t.role != Role::User && !t.images.is_empty()) {
            return Err(ClientError::InvalidChat("only user turns may carry images".into()));
        }
        let key = cache_key(&self.config.model_name, turns);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(ChatResponse {
                text: hit.response_text,
                from_cache: true,
                latency_ms: hit.latency_ms,
                attempts: 0,
                cache_key: key,
            });
        }

        let request = ChatRequest { config: &self.config, turns, context };
        let mut attempts = 0u32;
        let completion = loop {
            attempts += 1;
            let outcome = {
                let _slot = self.admission.acquire();
                self.backend.complete(&request)
            };
            match outcome {
                Ok(completion) => break completion,
                Err(BackendError::Transient(message)) => {
                    if attempts > self.retry.max_retries {
                        return Err(ClientError::ExhaustedRetries { attempts, last: message });
                    }
                    self.clock.sleep(self.retry.delay_for_retry(attempts));
                }
                Err(BackendError::Auth { status, message }) => return Err(ClientError::Auth { status, message }),
                Err(BackendError::Request { status, message }) => {
                    return Err(ClientError::Request { status, message })
                }
                Err(BackendError::Transport(message)) => return Err(ClientError::Transport(message)),
            }
        };
        if let Some(cache) = &self.cache {
            // a failed cache write only costs a future re-request
            let _ = cache.put(&key, &completion.text, completion.latency_ms);
        }
        Ok(ChatResponse {
            text: completion.text,
            from_cache: false,
            latency_ms: completion.latency_ms,
            attempts,
            cache_key: key,
        })
    }
}
