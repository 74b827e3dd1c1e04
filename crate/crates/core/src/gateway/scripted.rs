//! Deterministic scripted backend for tests and offline runs.
//!
//! Two modes: per-role FIFO queues (each send pops the next response for
//! that role), or a handler closure that selects the response from the
//! request content. Latency is reported as 0 so scripted runs are
//! reproducible byte for byte.

use super::{Backend, BackendRequest, BackendResponse, GatewayError, Role, Usage};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Mutex;

type Handler = dyn Fn(&BackendRequest) -> Option<String> + Send + Sync;

/// One queued response in a script file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub role: Role,
    pub text: String,
}

#[derive(Default)]
struct Queues {
    planner: VecDeque<String>,
    observer: VecDeque<String>,
    reflector: VecDeque<String>,
}

impl Queues {
    fn for_role(&mut self, role: Role) -> &mut VecDeque<String> {
        match role {
            Role::Planner => &mut self.planner,
            Role::Observer => &mut self.observer,
            Role::Reflector => &mut self.reflector,
        }
    }
}

pub struct ScriptedBackend {
    queues: Mutex<Queues>,
    handler: Option<Box<Handler>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self {
            queues: Mutex::new(Queues::default()),
            handler: None,
        }
    }

    /// Scripted backend driven entirely by a matcher; queues are consulted
    /// only when the handler returns `None`.
    pub fn with_handler<F>(handler: F) -> Self
    where
        F: Fn(&BackendRequest) -> Option<String> + Send + Sync + 'static,
    {
        Self {
            queues: Mutex::new(Queues::default()),
            handler: Some(Box::new(handler)),
        }
    }

    /// Loads a script file: a JSON array of `{"role": ..., "text": ...}`
    /// entries queued in order.
    pub fn from_script_file(path: &std::path::Path) -> Result<Self, GatewayError> {
        let raw = std::fs::read_to_string(path)?;
        let entries: Vec<ScriptEntry> = serde_json::from_str(&raw)
            .map_err(|e| GatewayError::CassetteFormat(format!("script file: {e}")))?;
        let backend = Self::new();
        for entry in entries {
            backend.push(entry.role, entry.text);
        }
        Ok(backend)
    }

    pub fn push(&self, role: Role, text: impl Into<String>) {
        self.queues
            .lock()
            .expect("scripted queue lock")
            .for_role(role)
            .push_back(text.into());
    }
}

impl Default for ScriptedBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl Backend for ScriptedBackend {
    fn send(&self, req: &BackendRequest) -> Result<BackendResponse, GatewayError> {
        if let Some(handler) = &self.handler {
            if let Some(text) = handler(req) {
                return Ok(BackendResponse {
                    text,
                    usage: Usage::default(),
                    latency_ms: 0,
                });
            }
        }
        let text = self
            .queues
            .lock()
            .expect("scripted queue lock")
            .for_role(req.role)
            .pop_front()
            .ok_or(GatewayError::ScriptExhausted(req.role.as_str()))?;
        Ok(BackendResponse {
            text,
            usage: Usage::default(),
            latency_ms: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(role: Role) -> BackendRequest {
        BackendRequest {
            role,
            system_text: "s".into(),
            user_text: "u".into(),
            frames: vec![],
            response_schema_hint: "h".into(),
            max_output_tokens: 64,
        }
    }

    #[test]
    fn pops_in_role_order() {
        let backend = ScriptedBackend::new();
        backend.push(Role::Planner, "p1");
        backend.push(Role::Reflector, "r1");
        backend.push(Role::Planner, "p2");
        assert_eq!(backend.send(&req(Role::Planner)).expect("p1").text, "p1");
        assert_eq!(backend.send(&req(Role::Reflector)).expect("r1").text, "r1");
        assert_eq!(backend.send(&req(Role::Planner)).expect("p2").text, "p2");
    }

    #[test]
    fn exhausted_queue_errors() {
        let backend = ScriptedBackend::new();
        assert!(matches!(
            backend.send(&req(Role::Observer)),
            Err(GatewayError::ScriptExhausted("observer"))
        ));
    }

    #[test]
    fn handler_selects_by_content() {
        let backend = ScriptedBackend::with_handler(|req| {
            req.user_text.contains("magic").then(|| "found".to_string())
        });
        let mut r = req(Role::Observer);
        r.user_text = "the magic word".into();
        assert_eq!(backend.send(&r).expect("found").text, "found");
    }
}
