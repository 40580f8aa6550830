use serde::{Deserialize, Serialize};

use crate::geometry::{GazePoint, Quaternion};

use super::AlignedFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub n_in: usize,
    pub k_out: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { n_in: 15, k_out: 3, stride: 1 }
    }
}

/// `n_in` input frames followed by `k_out` target gaze points from one session.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub gaze: Vec<GazePoint>,
    pub head: Vec<Quaternion>,
    pub targets: Vec<GazePoint>,
    pub scene_id: String,
    pub session_id: String,
    pub scene_feature_ref: Option<usize>,
    /// Timestamp of the first input frame.
    pub start_us: i64,
}

/// Number of windows a session of `len` frames yields.
pub fn window_count(len: usize, cfg: &WindowConfig) -> usize {
    let span = cfg.n_in + cfg.k_out;
    if len < span || cfg.stride == 0 {
        0
    } else {
        (len - span) / cfg.stride + 1
    }
}

/// Slides over one session's frames. Callers pass one session at a time, so
/// a window never straddles two sessions.
pub fn make_windows(frames: &[AlignedFrame], cfg: &WindowConfig) -> Vec<WindowSample> {
    let span = cfg.n_in + cfg.k_out;
    let count = window_count(frames.len(), cfg);
    (0..count)
        .map(|w| {
            let s = &frames[w * cfg.stride..w * cfg.stride + span];
            debug_assert!(s.iter().all(|f| f.session_id == s[0].session_id));
            WindowSample {
                gaze: s[..cfg.n_in].iter().map(|f| f.gaze).collect(),
                head: s[..cfg.n_in].iter().map(|f| f.head).collect(),
                targets: s[cfg.n_in..].iter().map(|f| f.gaze).collect(),
                scene_id: s[0].scene_id.clone(),
                session_id: s[0].session_id.clone(),
                scene_feature_ref: s[0].scene_feature_ref,
                start_us: s[0].t_us,
            }
        })
        .collect()
}
