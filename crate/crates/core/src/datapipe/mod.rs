//! Trace ingestion, alignment, windowing, scene splits and batching.

mod align;
mod batch;
mod corpus;
mod scene;
mod split;
mod trace;
mod window;

use std::fmt::Display;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GazeBounds, GeometryError};

pub use align::{align_streams, filter_confidence, head_at, split_on_gaps, AlignOutput, AlignedFrame};
pub use batch::{for_each_batch, pack_batch, Batch, BatchIndices, BatchPlan};
pub use corpus::{Corpus, Dataset};
pub use scene::{write_feature_file, write_scene_image, FeatureManifest, SceneKind, SceneStore};
pub use split::{split_scenes, SceneSplit};
pub use trace::{
    ingest_traces, parse_traces, write_traces, GazeSample, HeadSample, RawGaze, RawTraceRecord, TraceSession,
    TRACE_COLUMNS,
};
pub use window::{make_windows, window_count, WindowConfig, WindowSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("timestamps of session {0} cannot be ordered")]
    NonMonotonicTimestamp(String),
    #[error("gaze and head streams of session {0} do not overlap in time")]
    NoOverlap(String),
    #[error("split counts sum to {requested} but {available} scenes are available")]
    CountMismatch { requested: usize, available: usize },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("no scene input for scene {0}")]
    UnknownScene(String),
    #[error("batch has no windows")]
    EmptyBatch,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl DataError {
    pub fn io(path: &Path, e: impl Display) -> Self {
        DataError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    pub fn format(path: &Path, e: impl Display) -> Self {
        DataError::Format { path: path.display().to_string(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub confidence_threshold: f64,
    pub bounds: GazeBounds,
    pub window: WindowConfig,
    /// A gap longer than this many median intervals splits a session.
    pub gap_factor: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { confidence_threshold: 0.8, bounds: GazeBounds::UNIT, window: WindowConfig::default(), gap_factor: 5.0 }
    }
}

/// Counters accumulated while turning sessions into frames and windows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub sessions: usize,
    pub segments: usize,
    pub gaze_samples: usize,
    pub dropped_confidence: usize,
    pub dropped_uncovered: usize,
    pub clamped: usize,
    pub frames: usize,
    pub windows: usize,
}

impl PipelineStats {
    pub fn merge(&mut self, o: &PipelineStats) {
        self.sessions += o.sessions;
        self.segments += o.segments;
        self.gaze_samples += o.gaze_samples;
        self.dropped_confidence += o.dropped_confidence;
        self.dropped_uncovered += o.dropped_uncovered;
        self.clamped += o.clamped;
        self.frames += o.frames;
        self.windows += o.windows;
    }
}

/// Filters, splits on gaps and aligns one session. Segments after the first
/// get their session id suffixed with `#k`.
pub fn session_frames(session: &TraceSession, cfg: &PipelineConfig) -> Result<(Vec<Vec<AlignedFrame>>, PipelineStats), DataError> {
    let gaze = session.gaze_stream();
    let head = session.head_stream()?;
    let mut stats = PipelineStats { sessions: 1, gaze_samples: gaze.len(), ..Default::default() };
    let (kept, dropped) = filter_confidence(&gaze, cfg.confidence_threshold);
    stats.dropped_confidence = dropped;
    let mut out = Vec::new();
    for (k, seg) in split_on_gaps(&kept, cfg.gap_factor).into_iter().enumerate() {
        let id = if k == 0 { session.session_id.clone() } else { format!("{}#{k}", session.session_id) };
        let aligned = match align_streams(&seg, &head, &cfg.bounds, &session.scene_id, &id) {
            Ok(a) => a,
            Err(DataError::NoOverlap(_)) => {
                stats.dropped_uncovered += seg.len();
                continue;
            }
            Err(e) => return Err(e),
        };
        stats.dropped_uncovered += aligned.dropped_uncovered;
        stats.clamped += aligned.clamped;
        stats.frames += aligned.frames.len();
        if !aligned.frames.is_empty() {
            stats.segments += 1;
            out.push(aligned.frames);
        }
    }
    Ok((out, stats))
}

/// Full per-session pipeline down to windows. Scene references are
/// resolved against `store` when one is given.
pub fn session_windows(
    session: &TraceSession,
    cfg: &PipelineConfig,
    store: Option<&SceneStore>,
) -> Result<(Vec<WindowSample>, PipelineStats), DataError> {
    let (segments, mut stats) = session_frames(session, cfg)?;
    let scene_ref = store.and_then(|s| s.ref_of(&session.scene_id));
    let mut windows = Vec::new();
    for mut frames in segments {
        for f in &mut frames {
            f.scene_feature_ref = scene_ref;
        }
        windows.extend(make_windows(&frames, &cfg.window));
    }
    stats.windows = windows.len();
    Ok((windows, stats))
}
