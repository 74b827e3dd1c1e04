//! Temporal-cue extraction and the timestamp rules that turn cues into
//! candidate regions.
//!
//! This is the deterministic, rule-based side of planning: it recognizes
//! explicit clock tokens (`mm:ss`, `hh:mm:ss`), range separators, "at" /
//! "around" phrasing, and positional words, then compiles them into clamped,
//! merged regions. The planner prompt documents the same rules for model
//! backends; this module doubles as the rule-based fallback planner.
//!
//! Everything here is a pure function of its inputs.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Padding applied around reasoning-class and approximate cues. The rules
/// allow 15-30 s; both worked examples use 15 s, so 15 s is the fixed,
/// reproducible choice.
pub const CONTEXT_PAD_SEC: f64 = 15.0;
/// Window length for positional cues ("opening", "end").
pub const POSITIONAL_WINDOW_SEC: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeCueKind {
    ExactRange,
    SingleTimestamp,
    Approximate,
    PositionalOpen,
    PositionalEnd,
    None,
}

/// One temporal cue found in query text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeCue {
    pub kind: TimeCueKind,
    /// Zero, one, or two timestamps in seconds depending on `kind`.
    pub values: Vec<f64>,
    /// Character offsets of the matched text in the query.
    pub source_span: (usize, usize),
}

impl TimeCue {
    fn none() -> Self {
        TimeCue {
            kind: TimeCueKind::None,
            values: Vec::new(),
            source_span: (0, 0),
        }
    }
}

/// Query classification used by the timestamp rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryClass {
    Factual,
    Reasoning,
}

fn time_token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // hh:mm:ss or mm:ss clock tokens.
    RE.get_or_init(|| Regex::new(r"\b(\d{1,2}):(\d{2})(?::(\d{2}))?\b").expect("time token regex"))
}

fn parse_clock(caps: &regex::Captures) -> f64 {
    let a: f64 = caps[1].parse().unwrap_or(0.0);
    let b: f64 = caps[2].parse().unwrap_or(0.0);
    match caps.get(3) {
        Some(c) => {
            let c: f64 = c.as_str().parse().unwrap_or(0.0);
            a * 3600.0 + b * 60.0 + c
        }
        None => a * 60.0 + b,
    }
}

#[derive(Debug, Clone, Copy)]
struct Token {
    seconds: f64,
    start: usize,
    end: usize,
}

/// Words that may immediately precede a time token and change its meaning.
fn preceding_word(text: &str, token_start: usize) -> Option<&str> {
    let head = text[..token_start].trim_end();
    head.rsplit(|c: char| !c.is_alphanumeric())
        .find(|w| !w.is_empty())
}

/// Extracts temporal cues in textual order. Unparseable fragments are
/// ignored; when nothing matches, a single none-cue is returned so callers
/// can fall back to a uniform scan.
pub fn parse_time_cues(text: &str) -> Vec<TimeCue> {
    let mut tokens: Vec<Token> = time_token_re()
        .captures_iter(text)
        .map(|caps| {
            let m = caps.get(0).expect("whole match");
            Token {
                seconds: parse_clock(&caps),
                start: m.start(),
                end: m.end(),
            }
        })
        .collect();

    // Bare integers count as seconds only right after "at"/"around"/"about",
    // so "4 to 5 feet" never parses as a range.
    static BARE: OnceLock<Regex> = OnceLock::new();
    let bare = BARE.get_or_init(|| {
        Regex::new(r"(?i)\b(at|around|about)\s+(\d{1,5})\b").expect("bare seconds regex")
    });
    for caps in bare.captures_iter(text) {
        let m = caps.get(2).expect("digits");
        // Skip if this span is already covered by a clock token.
        if tokens.iter().any(|t| m.start() >= t.start && m.end() <= t.end) {
            continue;
        }
        tokens.push(Token {
            seconds: caps[2].parse().unwrap_or(0.0),
            start: m.start(),
            end: m.end(),
        });
    }
    tokens.sort_by_key(|t| t.start);

    let mut cues: Vec<TimeCue> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i];
        // Range: two clock tokens joined by "-", "–", "—", or "to".
        if i + 1 < tokens.len() {
            let next = tokens[i + 1];
            let sep = text[tok.end..next.start].trim();
            let is_range_sep = matches!(sep, "-" | "–" | "—") || sep.eq_ignore_ascii_case("to");
            if is_range_sep && tok.seconds < next.seconds {
                cues.push(TimeCue {
                    kind: TimeCueKind::ExactRange,
                    values: vec![tok.seconds, next.seconds],
                    source_span: (tok.start, next.end),
                });
                i += 2;
                continue;
            }
        }
        let kind = match preceding_word(text, tok.start) {
            Some(w) if w.eq_ignore_ascii_case("around") || w.eq_ignore_ascii_case("about") => {
                TimeCueKind::Approximate
            }
            _ => TimeCueKind::SingleTimestamp,
        };
        cues.push(TimeCue {
            kind,
            values: vec![tok.seconds],
            source_span: (tok.start, tok.end),
        });
        i += 1;
    }

    static POSITIONAL: OnceLock<Regex> = OnceLock::new();
    let positional = POSITIONAL
        .get_or_init(|| Regex::new(r"(?i)\b(opening|beginning|ending|end)\b").expect("positional"));
    for m in positional.find_iter(text) {
        let kind = match m.as_str().to_ascii_lowercase().as_str() {
            "opening" | "beginning" => TimeCueKind::PositionalOpen,
            _ => TimeCueKind::PositionalEnd,
        };
        cues.push(TimeCue {
            kind,
            values: Vec::new(),
            source_span: (m.start(), m.end()),
        });
    }

    cues.sort_by_key(|c| c.source_span.0);
    if cues.is_empty() {
        cues.push(TimeCue::none());
    }
    cues
}

const FACTUAL_KEYWORDS: &[&str] = &["what", "how many", "who", "which", "count", "identify"];
const REASONING_KEYWORDS: &[&str] = &["why", "how", "explain", "reason", "cause"];

fn keyword_matches(text: &str, keyword: &str) -> Option<usize> {
    // Word-bounded, case-insensitive phrase search; returns the byte offset
    // of the first occurrence.
    let lower = text.to_lowercase();
    let bytes = lower.as_bytes();
    let needle = keyword.as_bytes();
    let mut from = 0;
    while let Some(pos) = lower[from..].find(keyword) {
        let start = from + pos;
        let end = start + needle.len();
        let left_ok = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
        let right_ok = end == bytes.len() || !bytes[end].is_ascii_alphanumeric();
        if left_ok && right_ok {
            return Some(start);
        }
        from = start + 1;
    }
    None
}

/// Classifies a query as factual or reasoning via longest-phrase keyword
/// match ("how many" wins over bare "how"). Unmatched text defaults to
/// factual.
pub fn classify_query(text: &str) -> QueryClass {
    let mut best: Option<(usize, usize, QueryClass)> = None; // (len, pos, class)
    for (class, list) in [
        (QueryClass::Factual, FACTUAL_KEYWORDS),
        (QueryClass::Reasoning, REASONING_KEYWORDS),
    ] {
        for kw in list {
            if let Some(pos) = keyword_matches(text, kw) {
                let candidate = (kw.len(), pos, class);
                best = Some(match best {
                    None => candidate,
                    Some(cur) => {
                        // Longer phrase wins; ties go to the earlier match.
                        if candidate.0 > cur.0 || (candidate.0 == cur.0 && candidate.1 < cur.1) {
                            candidate
                        } else {
                            cur
                        }
                    }
                });
            }
        }
    }
    best.map(|(_, _, c)| c).unwrap_or(QueryClass::Factual)
}

/// Widens a degenerate clamped region to a 1 s window capped at the video
/// bounds, so downstream sampling always gets at least one frame.
fn widen_degenerate(anchor: f64, duration: f64) -> (f64, f64) {
    if duration <= 1.0 {
        return (0.0, duration);
    }
    let start = anchor.clamp(0.0, duration - 1.0);
    (start, start + 1.0)
}

fn clamp_region(start: f64, end: f64, duration: f64) -> (f64, f64) {
    let s = start.clamp(0.0, duration);
    let e = end.clamp(0.0, duration);
    if s < e {
        (s, e)
    } else {
        widen_degenerate(s.min(e), duration)
    }
}

/// Merges overlapping or touching regions; output is sorted and pairwise
/// disjoint.
pub fn merge_regions(mut regions: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    regions.sort_by(|a, b| a.partial_cmp(b).expect("finite region bounds"));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(regions.len());
    for (s, e) in regions {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

/// Compiles cues into regions:
///
/// - exact range: factual uses the range as-is, reasoning pads 15 s each side
/// - single timestamp: factual takes a 1 s forward window, reasoning pads 15 s
/// - approximate: +/-15 s window
/// - positional open -> [0, 30]; positional end -> [max(0, d-30), d]
///
/// All regions are clamped to [0, duration] and merged. A none-cue yields an
/// empty list, signalling the uniform-scan fallback.
pub fn apply_timestamp_rules(
    cues: &[TimeCue],
    class: QueryClass,
    duration_sec: f64,
) -> Vec<(f64, f64)> {
    let mut regions = Vec::new();
    for cue in cues {
        let region = match cue.kind {
            TimeCueKind::ExactRange => {
                let (a, b) = (cue.values[0], cue.values[1]);
                match class {
                    QueryClass::Factual => clamp_region(a, b, duration_sec),
                    QueryClass::Reasoning => {
                        clamp_region(a - CONTEXT_PAD_SEC, b + CONTEXT_PAD_SEC, duration_sec)
                    }
                }
            }
            TimeCueKind::SingleTimestamp => {
                let t = cue.values[0];
                match class {
                    QueryClass::Factual => clamp_region(t, t + 1.0, duration_sec),
                    QueryClass::Reasoning => {
                        clamp_region(t - CONTEXT_PAD_SEC, t + CONTEXT_PAD_SEC, duration_sec)
                    }
                }
            }
            TimeCueKind::Approximate => {
                let t = cue.values[0];
                clamp_region(t - CONTEXT_PAD_SEC, t + CONTEXT_PAD_SEC, duration_sec)
            }
            TimeCueKind::PositionalOpen => clamp_region(0.0, POSITIONAL_WINDOW_SEC, duration_sec),
            TimeCueKind::PositionalEnd => clamp_region(
                (duration_sec - POSITIONAL_WINDOW_SEC).max(0.0),
                duration_sec,
                duration_sec,
            ),
            TimeCueKind::None => continue,
        };
        regions.push(region);
    }
    merge_regions(regions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(kind: TimeCueKind, values: Vec<f64>) -> TimeCue {
        TimeCue {
            kind,
            values,
            source_span: (0, 0),
        }
    }

    #[test]
    fn parses_exact_range_with_dash() {
        let cues = parse_time_cues("from 07:15\u{2013}07:18 the crowd cheers");
        assert_eq!(cues.len(), 1);
        assert_eq!(cues[0].kind, TimeCueKind::ExactRange);
        assert_eq!(cues[0].values, vec![435.0, 438.0]);
    }

    #[test]
    fn parses_single_timestamp_after_at() {
        let cues = parse_time_cues("the sheet shown at 02:15");
        assert_eq!(cues[0].kind, TimeCueKind::SingleTimestamp);
        assert_eq!(cues[0].values, vec![135.0]);
    }

    #[test]
    fn parses_approximate_timestamp() {
        let cues = parse_time_cues("around 1:23 something happens");
        assert_eq!(cues[0].kind, TimeCueKind::Approximate);
        assert_eq!(cues[0].values, vec![83.0]);
    }

    #[test]
    fn parses_hh_mm_ss() {
        let cues = parse_time_cues("at 01:02:03 exactly");
        assert_eq!(cues[0].values, vec![3723.0]);
    }

    #[test]
    fn bare_integer_after_at_is_seconds() {
        let cues = parse_time_cues("the shot at 95 was decisive");
        assert_eq!(cues[0].kind, TimeCueKind::SingleTimestamp);
        assert_eq!(cues[0].values, vec![95.0]);
    }

    #[test]
    fn bare_integer_range_is_not_a_cue() {
        // "4 to 5 feet" must not parse as a temporal range.
        let cues = parse_time_cues("hatchlings range from 4 to 5 feet");
        assert_eq!(cues.len(), 1);
        assert_eq!(cues[0].kind, TimeCueKind::None);
    }

    #[test]
    fn no_temporal_token_yields_none_cue() {
        let cues = parse_time_cues("what happens first?");
        assert_eq!(cues.len(), 1);
        assert_eq!(cues[0].kind, TimeCueKind::None);
    }

    #[test]
    fn positional_words_recognized() {
        let cues = parse_time_cues("in the opening scene");
        assert_eq!(cues[0].kind, TimeCueKind::PositionalOpen);
        let cues = parse_time_cues("near the end of the video");
        assert_eq!(cues[0].kind, TimeCueKind::PositionalEnd);
    }

    #[test]
    fn classify_how_many_is_factual() {
        assert_eq!(
            classify_query("How many three-pointers are made?"),
            QueryClass::Factual
        );
    }

    #[test]
    fn classify_why_is_reasoning() {
        assert_eq!(
            classify_query("Why does the coach leave?"),
            QueryClass::Reasoning
        );
    }

    #[test]
    fn classify_bare_how_is_reasoning() {
        assert_eq!(
            classify_query("How does the machine assemble the part?"),
            QueryClass::Reasoning
        );
    }

    #[test]
    fn classify_defaults_to_factual() {
        assert_eq!(classify_query("Describe the scene"), QueryClass::Factual);
    }

    #[test]
    fn rule1_exact_range() {
        let cues = [single(TimeCueKind::ExactRange, vec![435.0, 438.0])];
        assert_eq!(
            apply_timestamp_rules(&cues, QueryClass::Factual, 600.0),
            vec![(435.0, 438.0)]
        );
        assert_eq!(
            apply_timestamp_rules(&cues, QueryClass::Reasoning, 600.0),
            vec![(420.0, 453.0)]
        );
    }

    #[test]
    fn rule2_single_timestamp() {
        let cues = [single(TimeCueKind::SingleTimestamp, vec![135.0])];
        assert_eq!(
            apply_timestamp_rules(&cues, QueryClass::Factual, 600.0),
            vec![(135.0, 136.0)]
        );
        assert_eq!(
            apply_timestamp_rules(&cues, QueryClass::Reasoning, 600.0),
            vec![(120.0, 150.0)]
        );
    }

    #[test]
    fn rule3_approximate() {
        let cues = [single(TimeCueKind::Approximate, vec![83.0])];
        assert_eq!(
            apply_timestamp_rules(&cues, QueryClass::Factual, 600.0),
            vec![(68.0, 98.0)]
        );
    }

    #[test]
    fn positional_end_clamps_to_short_video() {
        let cues = [single(TimeCueKind::PositionalEnd, vec![])];
        assert_eq!(
            apply_timestamp_rules(&cues, QueryClass::Factual, 20.0),
            vec![(0.0, 20.0)]
        );
    }

    #[test]
    fn none_cue_yields_empty_regions() {
        let cues = [TimeCue::none()];
        assert!(apply_timestamp_rules(&cues, QueryClass::Factual, 100.0).is_empty());
    }

    #[test]
    fn timestamp_at_duration_widens_to_one_second() {
        let cues = [single(TimeCueKind::SingleTimestamp, vec![60.0])];
        let regions = apply_timestamp_rules(&cues, QueryClass::Factual, 60.0);
        assert_eq!(regions, vec![(59.0, 60.0)]);
    }

    #[test]
    fn overlapping_regions_merge() {
        let cues = [
            single(TimeCueKind::SingleTimestamp, vec![100.0]),
            single(TimeCueKind::Approximate, vec![99.0]),
        ];
        let regions = apply_timestamp_rules(&cues, QueryClass::Reasoning, 600.0);
        assert_eq!(regions, vec![(84.0, 115.0)]);
    }
}
