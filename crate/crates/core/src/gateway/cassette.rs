//! Record/replay cassette layer.
//!
//! Recording wraps a live backend and appends one line-delimited JSON
//! record `{digest, response}` per send. Replay serves responses from the
//! file and never touches the network; a request whose digest was not
//! recorded is a replay miss.

use super::{Backend, BackendRequest, BackendResponse, GatewayError, request_digest};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CassetteRecord {
    digest: String,
    response: BackendResponse,
}

/// Wraps a backend and persists every request/response pair.
pub struct CassetteRecorder<B> {
    inner: B,
    file: Mutex<std::fs::File>,
}

impl<B: Backend> CassetteRecorder<B> {
    pub fn create(inner: B, path: &Path) -> Result<Self, GatewayError> {
        let file = std::fs::File::create(path)?;
        Ok(Self {
            inner,
            file: Mutex::new(file),
        })
    }
}

impl<B: Backend> Backend for CassetteRecorder<B> {
    fn send(&self, req: &BackendRequest) -> Result<BackendResponse, GatewayError> {
        let response = self.inner.send(req)?;
        let record = CassetteRecord {
            digest: request_digest(req),
            response: response.clone(),
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| GatewayError::CassetteFormat(e.to_string()))?;
        let mut file = self.file.lock().expect("cassette file lock");
        writeln!(file, "{line}")?;
        file.flush()?;
        Ok(response)
    }
}

/// How replay matches requests to recorded responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReplayMode {
    /// Responses must be consumed in recorded order and each digest must
    /// match its position.
    Ordered,
    /// Responses are looked up by digest; repeats of the same digest are
    /// served in recorded order.
    #[default]
    ByDigest,
}

pub struct CassetteReplayer {
    mode: ReplayMode,
    ordered: Mutex<VecDeque<CassetteRecord>>,
    by_digest: Mutex<HashMap<String, VecDeque<BackendResponse>>>,
}

impl CassetteReplayer {
    pub fn load(path: &Path, mode: ReplayMode) -> Result<Self, GatewayError> {
        let raw = std::fs::read_to_string(path)?;
        let mut ordered = VecDeque::new();
        let mut by_digest: HashMap<String, VecDeque<BackendResponse>> = HashMap::new();
        for (lineno, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: CassetteRecord = serde_json::from_str(line).map_err(|e| {
                GatewayError::CassetteFormat(format!("line {}: {e}", lineno + 1))
            })?;
            by_digest
                .entry(record.digest.clone())
                .or_default()
                .push_back(record.response.clone());
            ordered.push_back(record);
        }
        Ok(Self {
            mode,
            ordered: Mutex::new(ordered),
            by_digest: Mutex::new(by_digest),
        })
    }
}

impl Backend for CassetteReplayer {
    fn send(&self, req: &BackendRequest) -> Result<BackendResponse, GatewayError> {
        let digest = request_digest(req);
        match self.mode {
            ReplayMode::Ordered => {
                let mut queue = self.ordered.lock().expect("replay queue lock");
                let record = queue
                    .pop_front()
                    .ok_or_else(|| GatewayError::ReplayMiss {
                        digest: digest.clone(),
                    })?;
                if record.digest != digest {
                    return Err(GatewayError::ReplayMiss { digest });
                }
                Ok(record.response)
            }
            ReplayMode::ByDigest => {
                let mut map = self.by_digest.lock().expect("replay map lock");
                map.get_mut(&digest)
                    .and_then(|q| q.pop_front())
                    .ok_or(GatewayError::ReplayMiss { digest })
            }
        }
    }
}
