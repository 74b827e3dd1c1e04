//! Uniform interface to multimodal chat backends.
//!
//! The engine depends only on [`BackendRequest`]/[`BackendResponse`]; the
//! concrete transports are a generic HTTP backend with retries, a
//! deterministic scripted backend, and a record/replay cassette layer.

mod cassette;
mod http;
mod scripted;

pub use cassette::{CassetteRecorder, CassetteReplayer, ReplayMode};
pub use http::{HttpBackend, HttpBackendConfig, RealSleeper, Sleeper};
pub use scripted::ScriptedBackend;

use crate::sampler::estimate_text_tokens;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Which agent a request speaks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Planner,
    Observer,
    Reflector,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Planner => "planner",
            Role::Observer => "observer",
            Role::Reflector => "reflector",
        }
    }
}

/// One frame attached to a request.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestFrame {
    pub payload: Vec<u8>,
    pub mime: String,
    pub timestamp_sec: f64,
}

/// A single chat turn sent to a backend. Frames are empty for the planner
/// and reflector roles.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendRequest {
    pub role: Role,
    pub system_text: String,
    pub user_text: String,
    pub frames: Vec<RequestFrame>,
    /// Names the JSON schema the caller will parse, e.g. "planner_init".
    pub response_schema_hint: String,
    pub max_output_tokens: u32,
}

/// Token usage as reported by a provider; `None` means unknown.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    pub usage: Usage,
    pub latency_ms: u64,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out after {0} ms")]
    Timeout(u64),
    #[error("retries exhausted after {attempts} attempts: {last_error}")]
    RetriesExhausted { attempts: u32, last_error: String },
    #[error("server returned status {status}")]
    HttpStatus { status: u16, body: String },
    #[error("replay miss: no recorded response for digest {digest}")]
    ReplayMiss { digest: String },
    #[error("malformed model output: {0}")]
    MalformedOutput(String),
    #[error("cassette i/o: {0}")]
    CassetteIo(#[from] std::io::Error),
    #[error("cassette format: {0}")]
    CassetteFormat(String),
    #[error("no scripted response queued for role {0}")]
    ScriptExhausted(&'static str),
}

/// A multimodal chat backend. Implementations must be shareable across
/// concurrent sessions; per-request state stays in the call.
pub trait Backend: Send + Sync {
    fn send(&self, req: &BackendRequest) -> Result<BackendResponse, GatewayError>;
}

/// Stable content hash of a request: role, texts, frame timestamps and
/// payload hashes, schema hint, and output cap. Identical requests yield
/// identical digests across runs.
pub fn request_digest(req: &BackendRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(req.role.as_str().as_bytes());
    hasher.update([0]);
    hasher.update(req.system_text.as_bytes());
    hasher.update([0]);
    hasher.update(req.user_text.as_bytes());
    hasher.update([0]);
    for frame in &req.frames {
        hasher.update(frame.timestamp_sec.to_bits().to_le_bytes());
        hasher.update(Sha256::digest(&frame.payload));
        hasher.update(frame.mime.as_bytes());
        hasher.update([0]);
    }
    hasher.update(req.response_schema_hint.as_bytes());
    hasher.update([0]);
    hasher.update(req.max_output_tokens.to_le_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Estimated input tokens for a request: frame cost at the given per-frame
/// rate plus the character-count/4 text estimate.
pub fn estimate_request_tokens(req: &BackendRequest, tokens_per_frame: u64) -> u64 {
    let frame_tokens = req.frames.len() as u64 * tokens_per_frame;
    frame_tokens + estimate_text_tokens(&req.system_text) + estimate_text_tokens(&req.user_text)
}

/// Extracts the first balanced top-level JSON object from model text,
/// stripping Markdown code fences first. Anything before or after the
/// object is ignored.
pub fn extract_json_payload(text: &str) -> Result<serde_json::Value, GatewayError> {
    let stripped = strip_code_fences(text);
    let candidate = first_balanced_object(&stripped)
        .ok_or_else(|| GatewayError::MalformedOutput("no balanced JSON object found".into()))?;
    serde_json::from_str(candidate)
        .map_err(|e| GatewayError::MalformedOutput(format!("invalid JSON object: {e}")))
}

fn strip_code_fences(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            continue;
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Scans for the first `{...}` with balanced braces, honoring strings and
/// escapes.
fn first_balanced_object(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(user_text: &str) -> BackendRequest {
        BackendRequest {
            role: Role::Planner,
            system_text: "system".into(),
            user_text: user_text.into(),
            frames: vec![],
            response_schema_hint: "planner_init".into(),
            max_output_tokens: 512,
        }
    }

    #[test]
    fn digest_is_deterministic() {
        let r = request("hello");
        assert_eq!(request_digest(&r), request_digest(&r.clone()));
    }

    #[test]
    fn digest_sensitive_to_frame_timestamp() {
        let mut a = request("hello");
        a.frames.push(RequestFrame {
            payload: vec![1, 2, 3],
            mime: "image/jpeg".into(),
            timestamp_sec: 1.0,
        });
        let mut b = a.clone();
        b.frames[0].timestamp_sec = 2.0;
        assert_ne!(request_digest(&a), request_digest(&b));
    }

    #[test]
    fn digest_sensitive_to_output_cap() {
        let a = request("hello");
        let mut b = a.clone();
        b.max_output_tokens += 1;
        assert_ne!(request_digest(&a), request_digest(&b));
    }

    #[test]
    fn extracts_fenced_json() {
        let v = extract_json_payload("```json\n{\"sufficient\": true, \"justification\": \"x\"}\n```")
            .expect("payload");
        assert_eq!(v["sufficient"], serde_json::json!(true));
    }

    #[test]
    fn extracts_json_with_prefix_and_suffix() {
        let v = extract_json_payload("Sure! {\"plans\": {\"where\": \"uniform\"}} hope this helps")
            .expect("payload");
        assert_eq!(v["plans"]["where"], serde_json::json!("uniform"));
    }

    #[test]
    fn nested_braces_in_strings_are_handled() {
        let v = extract_json_payload("{\"a\": \"curly } inside\", \"b\": {\"c\": 1}}")
            .expect("payload");
        assert_eq!(v["b"]["c"], serde_json::json!(1));
    }

    #[test]
    fn missing_json_is_malformed() {
        assert!(matches!(
            extract_json_payload("no json here"),
            Err(GatewayError::MalformedOutput(_))
        ));
    }

    #[test]
    fn unbalanced_json_is_malformed() {
        assert!(matches!(
            extract_json_payload("{\"a\": 1"),
            Err(GatewayError::MalformedOutput(_))
        ));
    }

    #[test]
    fn estimate_counts_frames_and_text() {
        let mut r = request("aaaa aaaa aaaa aa"); // 17 chars -> 4 tokens
        r.frames.push(RequestFrame {
            payload: vec![0],
            mime: "image/jpeg".into(),
            timestamp_sec: 0.0,
        });
        // 66 (frame) + 1 (system: 6 chars -> 1) + 4 (user)
        assert_eq!(estimate_request_tokens(&r, 66), 71);
    }
}
