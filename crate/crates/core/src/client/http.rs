use std::time::{Duration, Instant};

use base64::Engine;
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatRequest, ClientError, Completion, EndpointConfig};

/// Blocking client for `{base_url}/chat/completions`.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(timeout: Duration) -> Result<Self, ClientError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { client })
    }
}

/// JSON body in the multimodal chat-completions shape. Images are re-encoded
/// as PNG data URLs.
pub fn build_request_body(config: &EndpointConfig, request: &ChatRequest<'_>) -> Result<Value, BackendError> {
    let mut messages = Vec::with_capacity(request.turns.len());
    for turn in request.turns {
        let mut content = vec![json!({ "type": "text", "text": turn.text })];
        for image in &turn.images {
            let png = image.encode_png().map_err(|e| BackendError::Transport(e.to_string()))?;
            let url = format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(png));
            content.push(json!({ "type": "image_url", "image_url": { "url": url } }));
        }
        messages.push(json!({ "role": turn.role.as_str(), "content": content }));
    }
    Ok(json!({
        "model": config.model_name,
        "messages": messages,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }))
}

fn extract_text(body: &Value) -> Option<String> {
    let content = body.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(""),
        ),
        Value::Null => Some(String::new()),
        _ => None,
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<Completion, BackendError> {
        let config = request.config;
        let body = build_request_body(config, request)?;
        let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        let mut builder = self.client.post(&url).json(&body);
        if let Ok(key) = std::env::var(&config.api_key_env) {
            if !key.is_empty() {
                builder = builder.bearer_auth(key);
            }
        }
        let started = Instant::now();
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Transient(format!("timeout: {e}"))
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let status = response.status().as_u16();
        let text = response.text().map_err(|e| BackendError::Transient(format!("reading body: {e}")))?;
        let latency_ms = started.elapsed().as_millis() as u64;
        match status {
            200..=299 => {
                let parsed: Value = serde_json::from_str(&text)
                    .map_err(|e| BackendError::Request { status, message: format!("unparseable body: {e}") })?;
                let text = extract_text(&parsed)
                    .ok_or_else(|| BackendError::Request { status, message: "response has no message content".into() })?;
                Ok(Completion { text, latency_ms })
            }
            401 | 403 => Err(BackendError::Auth { status, message: text }),
            429 | 500..=599 => Err(BackendError::Transient(format!("HTTP {status}: {text}"))),
            _ => Err(BackendError::Request { status, message: text }),
        }
    }
}
