use crate::geometry::{normalize_gaze, slerp, GazeBounds, GazePoint, Quaternion};

use super::{DataError, GazeSample, HeadSample};

/// Gaze sample with its head orientation resampled to the gaze clock.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedFrame {
    pub t_us: i64,
    pub gaze: GazePoint,
    pub head: Quaternion,
    pub scene_id: String,
    pub session_id: String,
    pub scene_feature_ref: Option<usize>,
}

/// Keeps samples whose confidence is strictly above `threshold`.
/// Returns the survivors and the number dropped.
pub fn filter_confidence(samples: &[GazeSample], threshold: f64) -> (Vec<GazeSample>, usize) {
    let kept: Vec<GazeSample> = samples.iter().copied().filter(|s| s.confidence > threshold).collect();
    let dropped = samples.len() - kept.len();
    (kept, dropped)
}

/// Splits a gaze stream wherever consecutive samples are more than
/// `factor` times the median interval apart.
pub fn split_on_gaps(samples: &[GazeSample], factor: f64) -> Vec<Vec<GazeSample>> {
    if samples.len() < 3 {
        return if samples.is_empty() { Vec::new() } else { vec![samples.to_vec()] };
    }
    let mut gaps: Vec<i64> = samples.windows(2).map(|w| w[1].t_us - w[0].t_us).collect();
    gaps.sort_unstable();
    let median = gaps[gaps.len() / 2] as f64;
    let limit = median * factor;
    let mut out = vec![vec![samples[0]]];
    for w in samples.windows(2) {
        if (w[1].t_us - w[0].t_us) as f64 > limit {
            out.push(Vec::new());
        }
        out.last_mut().expect("nonempty").push(w[1]);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignOutput {
    pub frames: Vec<AlignedFrame>,
    /// Gaze samples outside the head stream's time coverage.
    pub dropped_uncovered: usize,
    /// Gaze samples that fell outside the bounds and were clamped.
    pub clamped: usize,
}

/// Resamples the head stream at every gaze timestamp by SLERP between the
/// two bracketing head samples. Both streams must be sorted by time.
pub fn align_streams(
    gaze: &[GazeSample],
    head: &[HeadSample],
    bounds: &GazeBounds,
    scene_id: &str,
    session_id: &str,
) -> Result<AlignOutput, DataError> {
    if gaze.windows(2).any(|w| w[0].t_us >= w[1].t_us) || head.windows(2).any(|w| w[0].t_us >= w[1].t_us) {
        return Err(DataError::NonMonotonicTimestamp(session_id.to_string()));
    }
    let (Some(g0), Some(g1), Some(h0), Some(h1)) = (gaze.first(), gaze.last(), head.first(), head.last()) else {
        return Err(DataError::NoOverlap(session_id.to_string()));
    };
    if g1.t_us < h0.t_us || h1.t_us < g0.t_us {
        return Err(DataError::NoOverlap(session_id.to_string()));
    }

    let mut out = AlignOutput { frames: Vec::with_capacity(gaze.len()), dropped_uncovered: 0, clamped: 0 };
    for g in gaze {
        let Some(q) = head_at(head, g.t_us) else {
            out.dropped_uncovered += 1;
            continue;
        };
        let n = normalize_gaze(g.x, g.y, bounds)?;
        if n.clamped {
            out.clamped += 1;
        }
        out.frames.push(AlignedFrame {
            t_us: g.t_us,
            gaze: n.point,
            head: q,
            scene_id: scene_id.to_string(),
            session_id: session_id.to_string(),
            scene_feature_ref: None,
        });
    }
    Ok(out)
}

/// Interpolated head orientation at `t`, or `None` outside coverage.
pub fn head_at(head: &[HeadSample], t: i64) -> Option<Quaternion> {
    let i = head.partition_point(|h| h.t_us < t);
    if i < head.len() && head[i].t_us == t {
        return Some(head[i].q);
    }
    if i == 0 || i == head.len() {
        return None;
    }
    let (a, b) = (head[i - 1], head[i]);
    let frac = (t - a.t_us) as f64 / (b.t_us - a.t_us) as f64;
    Some(slerp(a.q, b.q, frac))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gs(t: i64, c: f64) -> GazeSample {
        GazeSample { t_us: t, x: 0.5, y: 0.5, confidence: c }
    }

    #[test]
    fn strict_threshold() {
        let all_hi: Vec<_> = (0..4).map(|t| gs(t, 0.9)).collect();
        assert_eq!(filter_confidence(&all_hi, 0.8), (all_hi.clone(), 0));
        let boundary: Vec<_> = (0..4).map(|t| gs(t, 0.8)).collect();
        assert_eq!(filter_confidence(&boundary, 0.8).0.len(), 0);
        let mixed = vec![gs(0, 0.5), gs(1, 0.81), gs(2, 0.79), gs(3, 1.0)];
        let (kept, dropped) = filter_confidence(&mixed, 0.8);
        assert_eq!((kept.len(), dropped), (2, 2));
    }

    #[test]
    fn filter_idempotent() {
        let mixed: Vec<_> = (0..50).map(|t| gs(t, (t as f64 * 0.37) % 1.0)).collect();
        let once = filter_confidence(&mixed, 0.8).0;
        assert_eq!(filter_confidence(&once, 0.8), (once.clone(), 0));
    }

    #[test]
    fn gaps_split_sessions() {
        let mut s: Vec<_> = (0..10).map(|t| gs(t * 100, 1.0)).collect();
        s.extend((0..10).map(|t| gs(5000 + t * 100, 1.0)));
        let parts = split_on_gaps(&s, 5.0);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].len(), 10);
        // 2x the median is not a gap
        let mut s: Vec<_> = (0..10).map(|t| gs(t * 100, 1.0)).collect();
        s.remove(4);
        assert_eq!(split_on_gaps(&s, 5.0).len(), 1);
    }

    fn heads() -> Vec<HeadSample> {
        let q90 = Quaternion::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        vec![HeadSample { t_us: 1000, q: Quaternion::IDENTITY }, HeadSample { t_us: 2000, q: q90 }]
    }

    #[test]
    fn exact_timestamp_uses_sample() {
        let out = align_streams(&[gs(2000, 1.0)], &heads(), &GazeBounds::UNIT, "s", "a").unwrap();
        assert_eq!(out.frames[0].head, heads()[1].q);
    }

    #[test]
    fn midpoint_is_slerp_midpoint() {
        let out = align_streams(&[gs(1500, 1.0)], &heads(), &GazeBounds::UNIT, "s", "a").unwrap();
        let half = 22.5_f64.to_radians();
        let q = out.frames[0].head;
        assert!((q.w - half.cos()).abs() < 1e-12 && (q.z - half.sin()).abs() < 1e-12);
    }

    #[test]
    fn uncovered_gaze_dropped() {
        let out = align_streams(&[gs(500, 1.0), gs(1200, 1.0)], &heads(), &GazeBounds::UNIT, "s", "a").unwrap();
        assert_eq!(out.dropped_uncovered, 1);
        assert_eq!(out.frames.len(), 1);
    }

    #[test]
    fn disjoint_ranges_error() {
        let err = align_streams(&[gs(5000, 1.0)], &heads(), &GazeBounds::UNIT, "s", "a");
        assert_eq!(err, Err(DataError::NoOverlap("a".into())));
        assert!(align_streams(&[], &heads(), &GazeBounds::UNIT, "s", "a").is_err());
    }
}
