//! Shared domain types, configuration defaults, and canonical JSON
//! serialization for sessions and traces.
//!
//! Everything here is an immutable value after construction and safe to
//! share across concurrent sessions. Ledger mutation happens only inside a
//! single session's sequential loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token budget for model input, shared by all roles.
pub const DEFAULT_TOKEN_BUDGET: u64 = 128_000;
/// Portion of the budget reserved for prompt text; frames use the rest.
pub const DEFAULT_TEXT_RESERVE_TOKENS: u64 = 4_096;
/// Maximum plan-observe-reflect rounds per session.
pub const DEFAULT_MAX_ROUNDS: u32 = 3;
/// Reflector confidence needed to halt with an answer.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.7;
/// Sampling rate bounds enforced on every plan.
pub const DEFAULT_FPS_BOUNDS: (f64, f64) = (0.25, 2.0);

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("confidence threshold {0} outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("text reserve {reserve} must be below token budget {budget}")]
    ReserveExceedsBudget { reserve: u64, budget: u64 },
    #[error("max_rounds must be at least 1")]
    ZeroRounds,
    #[error("fps bounds ({0}, {1}) invalid: need 0 < min <= max")]
    BadFpsBounds(f64, f64),
    #[error("query text is empty")]
    EmptyQueryText,
    #[error("option letters must be unique and contiguous from A, got {0:?}")]
    BadOptionLetters(Vec<char>),
    #[error("video duration must be positive, got {0}")]
    BadDuration(f64),
}

/// A question over one video, optionally multiple-choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    /// Empty for open-ended questions.
    pub options: Vec<QueryOption>,
    pub video_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOption {
    pub letter: char,
    pub text: String,
}

impl Query {
    /// Builds a query, assigning contiguous option letters from A.
    pub fn new(
        text: impl Into<String>,
        option_texts: impl IntoIterator<Item = String>,
        video_id: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptyQueryText);
        }
        let options = option_texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| QueryOption {
                letter: (b'A' + i as u8) as char,
                text: t,
            })
            .collect();
        Ok(Self {
            text,
            options,
            video_id: video_id.into(),
        })
    }

    /// Checks the option-letter invariant: unique, contiguous from A.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.text.trim().is_empty() {
            return Err(ModelError::EmptyQueryText);
        }
        let letters: Vec<char> = self.options.iter().map(|o| o.letter).collect();
        for (i, &l) in letters.iter().enumerate() {
            if l != (b'A' + i as u8) as char {
                return Err(ModelError::BadOptionLetters(letters));
            }
        }
        Ok(())
    }

    pub fn option_letters(&self) -> Vec<char> {
        self.options.iter().map(|o| o.letter).collect()
    }
}

/// Video identity plus the frame source the sampler resolves against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub duration_sec: f64,
    /// Path or identifier of the frame manifest backing this video.
    pub frame_source: String,
}

impl VideoMeta {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.duration_sec > 0.0) {
            return Err(ModelError::BadDuration(self.duration_sec));
        }
        Ok(())
    }
}

/// Spatial resolution tier; fixes the per-frame token cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialRes {
    Low,
    Medium,
}

impl SpatialRes {
    pub fn tokens_per_frame(self) -> u64 {
        match self {
            SpatialRes::Low => 66,
            SpatialRes::Medium => 258,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpatialRes::Low => "low",
            SpatialRes::Medium => "medium",
        }
    }
}

impl std::fmt::Display for SpatialRes {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Temporal mode of a plan: sweep everything or inspect listed regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WhereMode {
    Uniform,
    Region,
}

/// One round's observation specification: what to look for, where, and how
/// densely to sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub what: String,
    pub where_mode: WhereMode,
    /// Empty iff `where_mode` is uniform. Seconds, non-overlapping, sorted.
    pub regions: Vec<(f64, f64)>,
    pub fps: f64,
    pub res: SpatialRes,
    pub round: u32,
}

impl Plan {
    /// Coarse full-video sweep used when the query carries no timing cues.
    pub fn coarse_scan(what: impl Into<String>, round: u32) -> Self {
        Self {
            what: what.into(),
            where_mode: WhereMode::Uniform,
            regions: Vec::new(),
            fps: 0.5,
            res: SpatialRes::Low,
            round,
        }
    }
}

/// A single time-stamped observation: integer-second interval plus a
/// query-conditioned description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub start_sec: u32,
    pub end_sec: u32,
    pub description: String,
    pub round: u32,
}

/// Cumulative evidence across rounds; the loop's working memory.
///
/// Append-only: items are only ever added, in round order then backend
/// order, so the ledger after round r is a prefix of the ledger after
/// round r+1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceLedger {
    items: Vec<EvidenceItem>,
}

impl EvidenceLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one round's evidence slice.
    pub fn append_slice(&mut self, slice: &[EvidenceItem]) {
        self.items.extend_from_slice(slice);
    }

    pub fn items(&self) -> &[EvidenceItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Items sorted by interval, for prompt rendering.
    pub fn sorted_by_interval(&self) -> Vec<&EvidenceItem> {
        let mut v: Vec<&EvidenceItem> = self.items.iter().collect();
        v.sort_by(|a, b| {
            (a.start_sec, a.end_sec, a.round).cmp(&(b.start_sec, b.end_sec, b.round))
        });
        v
    }
}

/// Reflector verdict on the cumulative evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    /// In [0, 1]; boolean-only reflector output maps to {1.0, 0.0}.
    pub confidence: f64,
    /// Always recomputed as `confidence >= threshold`.
    pub sufficient: bool,
    pub justification: String,
    pub reasoning: String,
}

impl Reflection {
    /// Applies the normalization rule: numeric confidence wins when present,
    /// otherwise the boolean maps to 1.0/0.0; `sufficient` is recomputed
    /// against the halting threshold.
    pub fn normalized(
        numeric_confidence: Option<f64>,
        sufficient_flag: bool,
        justification: String,
        reasoning: String,
        threshold: f64,
    ) -> Self {
        let confidence = numeric_confidence
            .map(|c| c.clamp(0.0, 1.0))
            .unwrap_or(if sufficient_flag { 1.0 } else { 0.0 });
        Self {
            confidence,
            sufficient: confidence >= threshold,
            justification,
            reasoning,
        }
    }
}

/// One completed round as the planner sees it on the next pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub plan: Plan,
    /// That round's evidence slice (not the cumulative ledger).
    pub evidence: Vec<EvidenceItem>,
    pub justification: String,
}

/// Retry and timeout policy for backend calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff_ms: 1_000,
            timeout_ms: 120_000,
        }
    }
}

/// Session-level knobs. `default_config` returns the standard values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub max_rounds: u32,
    pub confidence_threshold: f64,
    pub token_budget: u64,
    pub text_reserve_tokens: u64,
    pub fps_bounds: (f64, f64),
    pub retry: RetryPolicy,
}

impl Default for SessionConfig {
    fn default() -> Self {
        default_config()
    }
}

/// Standard configuration: 3 rounds, 0.7 halting threshold, 128K token
/// budget with a 4096-token text reserve, fps clamped to [0.25, 2.0].
pub fn default_config() -> SessionConfig {
    SessionConfig {
        max_rounds: DEFAULT_MAX_ROUNDS,
        confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
        token_budget: DEFAULT_TOKEN_BUDGET,
        text_reserve_tokens: DEFAULT_TEXT_RESERVE_TOKENS,
        fps_bounds: DEFAULT_FPS_BOUNDS,
        retry: RetryPolicy::default(),
    }
}

/// Validates invariants and normalizes bounds. The threshold may exceed 1
/// only in the sense of rejecting it; callers wanting a never-halt session
/// set it to 1.0 and rely on strict comparison semantics elsewhere.
pub fn validate_config(cfg: SessionConfig) -> Result<SessionConfig, ModelError> {
    if !(0.0..=1.0).contains(&cfg.confidence_threshold) {
        return Err(ModelError::ThresholdOutOfRange(cfg.confidence_threshold));
    }
    if cfg.text_reserve_tokens >= cfg.token_budget {
        return Err(ModelError::ReserveExceedsBudget {
            reserve: cfg.text_reserve_tokens,
            budget: cfg.token_budget,
        });
    }
    if cfg.max_rounds < 1 {
        return Err(ModelError::ZeroRounds);
    }
    let (lo, hi) = cfg.fps_bounds;
    if !(lo > 0.0 && lo <= hi) {
        return Err(ModelError::BadFpsBounds(lo, hi));
    }
    Ok(cfg)
}

/// Per-round resource usage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundAccounting {
    /// Frame tokens plus text estimate (or provider-reported usage).
    pub input_tokens: u64,
    pub frame_count: u64,
    pub backend_calls: u32,
    pub wall_time_ms: u64,
}

impl RoundAccounting {
    pub fn add(&mut self, other: &RoundAccounting) {
        self.input_tokens += other.input_tokens;
        self.frame_count += other.frame_count;
        self.backend_calls += other.backend_calls;
        self.wall_time_ms += other.wall_time_ms;
    }
}

/// Per-round and total resource usage for a session. Totals always equal
/// the sum of the per-round entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Accounting {
    pub per_round: Vec<RoundAccounting>,
    pub total: RoundAccounting,
    /// True when any input-token figure was estimated rather than
    /// provider-reported.
    pub estimated: bool,
}

impl Accounting {
    pub fn push_round(&mut self, round: RoundAccounting) {
        self.total.add(&round);
        self.per_round.push(round);
    }

    /// Recomputes the total from per-round entries; used by tests.
    pub fn recomputed_total(&self) -> RoundAccounting {
        let mut t = RoundAccounting::default();
        for r in &self.per_round {
            t.add(r);
        }
        t
    }
}

/// Why the session stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HaltReason {
    /// Reflector confidence cleared the threshold.
    Confidence,
    /// Round limit reached; answer was forced.
    Forced,
}

/// Final output of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    /// Option letter for MCQ, free text otherwise.
    pub answer: String,
    pub justification: String,
    pub ledger: EvidenceLedger,
    /// Rounds that finished below threshold; the halting round's entry is
    /// not included.
    pub history: Vec<HistoryEntry>,
    pub accounting: Accounting,
    pub rounds_used: u32,
    pub halted_by: HaltReason,
    /// Set when the forced answer had to fall back to the first option.
    pub degraded: bool,
}
