//! Generic HTTP backend speaking a chat-completions-style wire shape.
//!
//! Transport failures and 5xx responses are retried up to `max_retries`
//! times with exponential backoff (1 s, 2 s, 4 s by default). 4xx responses
//! are not retried. The sleeper is injectable so tests can run with a
//! mocked clock.

use super::{Backend, BackendRequest, BackendResponse, GatewayError, Usage};
use serde::Deserialize;
use serde_json::json;
use std::time::{Duration, Instant};

/// Environment variable holding the API key sent as a bearer token.
pub const API_KEY_ENV: &str = "FRAMESCOUT_API_KEY";

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub model_name: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    #[serde(default = "default_backoff_ms")]
    pub initial_backoff_ms: u64,
}

fn default_backoff_ms() -> u64 {
    1_000
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8080/v1/chat".into(),
            model_name: "default-model".into(),
            timeout_s: 120.0,
            max_retries: 3,
            initial_backoff_ms: default_backoff_ms(),
        }
    }
}

/// Injectable sleep, so retry timing is testable without waiting.
pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

/// Sleeps on the real clock.
pub struct RealSleeper;

impl Sleeper for RealSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    sleeper: Box<dyn Sleeper>,
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
    #[serde(default)]
    usage: WireUsage,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    input_tokens: Option<u64>,
    output_tokens: Option<u64>,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, GatewayError> {
        Self::with_sleeper(config, Box::new(RealSleeper))
    }

    pub fn with_sleeper(
        config: HttpBackendConfig,
        sleeper: Box<dyn Sleeper>,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            client,
            api_key: std::env::var(API_KEY_ENV).ok(),
            sleeper,
        })
    }

    fn marshal(&self, req: &BackendRequest) -> serde_json::Value {
        use base64::Engine;
        let b64 = base64::engine::general_purpose::STANDARD;
        let mut parts = vec![json!({ "text": req.user_text })];
        for frame in &req.frames {
            parts.push(json!({
                "image": {
                    "mime": frame.mime,
                    "data": b64.encode(&frame.payload),
                    "timestamp_sec": frame.timestamp_sec,
                }
            }));
        }
        json!({
            "model": self.config.model_name,
            "messages": [
                { "role": "system", "parts": [{ "text": req.system_text }] },
                { "role": "user", "parts": parts },
            ],
            "max_output_tokens": req.max_output_tokens,
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<BackendResponse, GatewayError> {
        let started = Instant::now();
        let mut builder = self.client.post(&self.config.base_url).json(body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout((self.config.timeout_s * 1000.0) as u64)
            } else {
                GatewayError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::HttpStatus {
                status: status.as_u16(),
                body: text,
            });
        }
        let wire: WireResponse = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Transport(format!("bad response body: {e}")))?;
        Ok(BackendResponse {
            text: wire.text,
            usage: Usage {
                input_tokens: wire.usage.input_tokens,
                output_tokens: wire.usage.output_tokens,
            },
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn retryable(err: &GatewayError) -> bool {
        match err {
            GatewayError::Transport(_) | GatewayError::Timeout(_) => true,
            GatewayError::HttpStatus { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

impl Backend for HttpBackend {
    fn send(&self, req: &BackendRequest) -> Result<BackendResponse, GatewayError> {
        let body = self.marshal(req);
        let mut last_error: Option<GatewayError> = None;
        let attempts = self.config.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.initial_backoff_ms << (attempt - 1);
                self.sleeper.sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body) {
                Ok(resp) => return Ok(resp),
                Err(e) if Self::retryable(&e) => last_error = Some(e),
                Err(e) => return Err(e),
            }
        }
        let last = last_error.expect("at least one attempt ran");
        // Timeouts surface as-is so callers can tell them apart.
        if attempts == 1 {
            return Err(last);
        }
        Err(GatewayError::RetriesExhausted {
            attempts,
            last_error: last.to_string(),
        })
    }
}
