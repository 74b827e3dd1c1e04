//! Turns a plan into a concrete, budget-conforming set of frames.
//!
//! Grid sampling is start-inclusive, end-exclusive: each region contributes
//! `floor((end-start)*fps)` timestamps (at least one), which avoids
//! double-counting the boundary frames of adjacent regions. Budget
//! enforcement keeps evenly spaced indices with both endpoints.

use crate::model::{Plan, SessionConfig, SpatialRes, VideoMeta, WhereMode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("frame budget too small: available {available} tokens < {tokens_per_frame} per frame")]
    BudgetTooSmall {
        available: u64,
        tokens_per_frame: u64,
    },
    #[error("region mode requires at least one region")]
    EmptyRegions,
    #[error("frame manifest has no frames")]
    EmptyManifest,
    #[error("manifest frame timestamps must be strictly increasing within [0, duration]")]
    BadManifestOrder,
    #[error("failed to read manifest {path}: {source}")]
    ManifestIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse manifest {path}: {source}")]
    ManifestParse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("failed to read frame file {path}: {source}")]
    FrameIo {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// One frame file referenced by a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub t: f64,
    pub file: String,
    pub mime: String,
}

/// On-disk description of a decoded video: `manifest.json` next to its
/// frame files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub duration_sec: f64,
    pub frames: Vec<ManifestFrame>,
    /// Directory the frame paths are relative to; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Binary frame content attached to a backend request.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePayload {
    pub bytes: Vec<u8>,
    pub mime: String,
    pub timestamp_sec: f64,
}

/// Source of frame payloads for a video. Manifests are the file-backed
/// implementation; simulations provide an in-memory one.
pub trait FrameProvider: Send + Sync {
    fn duration_sec(&self) -> f64;
    fn resolve(&self, timestamps: &[f64]) -> Result<Vec<FramePayload>, SamplerError>;
}

impl FrameManifest {
    /// Loads `manifest.json` from a path; a directory path means
    /// `<dir>/manifest.json`.
    pub fn load(path: &Path) -> Result<Self, SamplerError> {
        let (manifest_path, base_dir) = if path.is_dir() {
            (path.join("manifest.json"), path.to_path_buf())
        } else {
            (
                path.to_path_buf(),
                path.parent().unwrap_or(Path::new(".")).to_path_buf(),
            )
        };
        let raw = std::fs::read_to_string(&manifest_path).map_err(|source| {
            SamplerError::ManifestIo {
                path: manifest_path.clone(),
                source,
            }
        })?;
        let mut manifest: FrameManifest =
            serde_json::from_str(&raw).map_err(|source| SamplerError::ManifestParse {
                path: manifest_path,
                source,
            })?;
        manifest.base_dir = base_dir;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let mut prev = f64::NEG_INFINITY;
        for f in &self.frames {
            if f.t <= prev || f.t < 0.0 || f.t > self.duration_sec {
                return Err(SamplerError::BadManifestOrder);
            }
            prev = f.t;
        }
        Ok(())
    }

    /// Index of the manifest frame nearest to `t`; ties go to the earlier
    /// frame.
    fn nearest_index(&self, t: f64) -> usize {
        let times: Vec<f64> = self.frames.iter().map(|f| f.t).collect();
        let mut lo = match times.binary_search_by(|v| v.partial_cmp(&t).expect("finite t")) {
            Ok(i) => return i,
            Err(i) => i,
        };
        if lo == 0 {
            return 0;
        }
        if lo >= times.len() {
            lo = times.len();
        }
        let before = lo - 1;
        if lo == times.len() {
            return before;
        }
        let d_before = (t - times[before]).abs();
        let d_after = (times[lo] - t).abs();
        if d_after < d_before {
            lo
        } else {
            before
        }
    }
}

impl FrameProvider for FrameManifest {
    fn duration_sec(&self) -> f64 {
        self.duration_sec
    }

    fn resolve(&self, timestamps: &[f64]) -> Result<Vec<FramePayload>, SamplerError> {
        resolve_frames(self, timestamps)
    }
}

/// Maps each requested timestamp to the nearest manifest frame (ties to the
/// earlier frame), collapsing duplicates while preserving request order.
pub fn resolve_frames(
    manifest: &FrameManifest,
    timestamps: &[f64],
) -> Result<Vec<FramePayload>, SamplerError> {
    if manifest.frames.is_empty() {
        return Err(SamplerError::EmptyManifest);
    }
    let mut seen = std::collections::HashSet::new();
    let mut payloads = Vec::new();
    for &t in timestamps {
        let idx = manifest.nearest_index(t);
        if !seen.insert(idx) {
            continue;
        }
        let frame = &manifest.frames[idx];
        let path = manifest.base_dir.join(&frame.file);
        let bytes = std::fs::read(&path).map_err(|source| SamplerError::FrameIo {
            path: path.clone(),
            source,
        })?;
        payloads.push(FramePayload {
            bytes,
            mime: frame.mime.clone(),
            timestamp_sec: frame.t,
        });
    }
    Ok(payloads)
}

/// The frames a plan actually requests, after budget enforcement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledClip {
    pub timestamps: Vec<f64>,
    pub res: SpatialRes,
    pub frame_token_cost: u64,
    pub regions_covered: Vec<(f64, f64)>,
}

/// Grid-samples each region at `fps`, start-inclusive and end-exclusive,
/// with at least one timestamp (the start) per nonempty region. Results are
/// concatenated, deduplicated, and sorted.
pub fn sample_timestamps(regions: &[(f64, f64)], fps: f64, duration_sec: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &(start, end) in regions {
        let span = (end - start).max(0.0);
        if span == 0.0 && (start < 0.0 || start > duration_sec) {
            continue;
        }
        // Epsilon guards the floor against representation error in span*fps.
        let count = ((span * fps + 1e-9).floor() as u64).max(1);
        for k in 0..count {
            out.push(start + k as f64 / fps);
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite timestamps"));
    out.dedup();
    out
}

/// Uniformly downsamples `timestamps` so the frame cost fits in
/// `budget - reserve`. Kept indices are `floor(j*(n-1)/(m-1))`, so the first
/// and last timestamps always survive.
pub fn enforce_budget(
    timestamps: Vec<f64>,
    res: SpatialRes,
    cfg: &SessionConfig,
) -> Result<Vec<f64>, SamplerError> {
    let tokens_per_frame = res.tokens_per_frame();
    let available = cfg.token_budget.saturating_sub(cfg.text_reserve_tokens);
    let n = timestamps.len() as u64;
    if n * tokens_per_frame <= available {
        return Ok(timestamps);
    }
    let m = available / tokens_per_frame;
    if m < 1 {
        return Err(SamplerError::BudgetTooSmall {
            available,
            tokens_per_frame,
        });
    }
    if m == 1 {
        return Ok(vec![timestamps[0]]);
    }
    let mut kept = Vec::with_capacity(m as usize);
    for j in 0..m {
        let idx = (j * (n - 1) / (m - 1)) as usize;
        kept.push(timestamps[idx]);
    }
    kept.dedup();
    Ok(kept)
}

/// Composes grid sampling and budget enforcement for a validated plan.
pub fn build_clip(
    plan: &Plan,
    meta: &VideoMeta,
    cfg: &SessionConfig,
) -> Result<SampledClip, SamplerError> {
    let regions: Vec<(f64, f64)> = match plan.where_mode {
        WhereMode::Uniform => vec![(0.0, meta.duration_sec)],
        WhereMode::Region => {
            if plan.regions.is_empty() {
                return Err(SamplerError::EmptyRegions);
            }
            plan.regions.clone()
        }
    };
    let sampled = sample_timestamps(&regions, plan.fps, meta.duration_sec);
    let timestamps = enforce_budget(sampled, plan.res, cfg)?;
    let frame_token_cost = timestamps.len() as u64 * plan.res.tokens_per_frame();
    Ok(SampledClip {
        timestamps,
        res: plan.res,
        frame_token_cost,
        regions_covered: regions,
    })
}

/// Character-count/4 token estimate for prompt text.
pub fn estimate_text_tokens(text: &str) -> u64 {
    (text.chars().count() as u64) / 4
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_config;

    #[test]
    fn grid_one_fps_ten_second_region() {
        let ts = sample_timestamps(&[(10.0, 20.0)], 1.0, 100.0);
        let expected: Vec<f64> = (10..20).map(|v| v as f64).collect();
        assert_eq!(ts, expected);
    }

    #[test]
    fn grid_half_fps_two_second_spacing() {
        let ts = sample_timestamps(&[(10.0, 20.0)], 0.5, 100.0);
        assert_eq!(ts, vec![10.0, 12.0, 14.0, 16.0, 18.0]);
    }

    #[test]
    fn short_region_keeps_at_least_one_frame() {
        let ts = sample_timestamps(&[(5.0, 5.4)], 0.25, 100.0);
        assert_eq!(ts, vec![5.0]);
    }

    #[test]
    fn budget_downsamples_to_arithmetic_count() {
        let cfg = default_config();
        let timestamps: Vec<f64> = (0..1200).map(|v| v as f64).collect();
        let kept = enforce_budget(timestamps, SpatialRes::Medium, &cfg).expect("fits");
        // floor((128000 - 4096) / 258) = 480
        assert_eq!(kept.len(), 480);
        assert_eq!(kept[0], 0.0);
        assert_eq!(*kept.last().expect("nonempty"), 1199.0);
    }

    #[test]
    fn under_budget_passes_through() {
        let cfg = default_config();
        let timestamps: Vec<f64> = (0..100).map(|v| v as f64).collect();
        let kept = enforce_budget(timestamps.clone(), SpatialRes::Low, &cfg).expect("fits");
        assert_eq!(kept, timestamps);
    }

    #[test]
    fn budget_too_small_errors() {
        let mut cfg = default_config();
        cfg.token_budget = 300;
        cfg.text_reserve_tokens = 100;
        let err = enforce_budget(vec![0.0, 1.0], SpatialRes::Medium, &cfg).unwrap_err();
        assert!(matches!(err, SamplerError::BudgetTooSmall { .. }));
    }

    fn manifest_with_times(times: &[f64]) -> FrameManifest {
        FrameManifest {
            duration_sec: times.last().copied().unwrap_or(0.0).max(1.0),
            frames: times
                .iter()
                .map(|&t| ManifestFrame {
                    t,
                    file: format!("f{t}.jpg"),
                    mime: "image/jpeg".into(),
                })
                .collect(),
            base_dir: PathBuf::new(),
        }
    }

    #[test]
    fn nearest_frame_breaks_ties_earlier() {
        let m = manifest_with_times(&[9.8, 10.3]);
        assert_eq!(m.nearest_index(10.0), 0); // |0.2| < |0.3|
        let m = manifest_with_times(&[9.0, 11.0]);
        assert_eq!(m.nearest_index(10.0), 0); // tie -> earlier
    }

    #[test]
    fn exact_timestamp_resolves_to_that_frame() {
        let m = manifest_with_times(&[1.0, 2.0, 3.0]);
        assert_eq!(m.nearest_index(2.0), 1);
    }

    #[test]
    fn empty_manifest_is_an_error() {
        let m = manifest_with_times(&[]);
        assert!(matches!(
            resolve_frames(&m, &[1.0]),
            Err(SamplerError::EmptyManifest)
        ));
    }

    #[test]
    fn build_clip_region_cost_matches_count() {
        let cfg = default_config();
        let meta = VideoMeta {
            video_id: "v".into(),
            duration_sec: 600.0,
            frame_source: String::new(),
        };
        let plan = Plan {
            what: "check the interval".into(),
            where_mode: WhereMode::Region,
            regions: vec![(60.0, 70.0)],
            fps: 2.0,
            res: SpatialRes::Medium,
            round: 2,
        };
        let clip = build_clip(&plan, &meta, &cfg).expect("clip");
        assert_eq!(clip.timestamps.len(), 20);
        assert_eq!(clip.frame_token_cost, 20 * 258);
    }

    #[test]
    fn build_clip_uniform_cost_uses_low_rate() {
        let cfg = default_config();
        let meta = VideoMeta {
            video_id: "v".into(),
            duration_sec: 600.0,
            frame_source: String::new(),
        };
        let plan = Plan::coarse_scan("sweep", 1);
        let clip = build_clip(&plan, &meta, &cfg).expect("clip");
        assert_eq!(clip.frame_token_cost, clip.timestamps.len() as u64 * 66);
        assert_eq!(clip.timestamps.len(), 300);
    }

    #[test]
    fn build_clip_rejects_region_mode_without_regions() {
        let cfg = default_config();
        let meta = VideoMeta {
            video_id: "v".into(),
            duration_sec: 600.0,
            frame_source: String::new(),
        };
        let plan = Plan {
            what: "x".into(),
            where_mode: WhereMode::Region,
            regions: vec![],
            fps: 1.0,
            res: SpatialRes::Low,
            round: 1,
        };
        assert!(matches!(
            build_clip(&plan, &meta, &cfg),
            Err(SamplerError::EmptyRegions)
        ));
    }
}
