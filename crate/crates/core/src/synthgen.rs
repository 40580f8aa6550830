//! Seeded synthetic sessions: a moving ball, a gaze model that follows it,
//! and head orientation that points at where gaze will be a little later.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datapipe::{
    split_scenes, write_feature_file, write_scene_image, write_traces, Corpus, DataError, RawGaze, RawTraceRecord,
    SceneKind, SceneSplit, SceneStore, TraceSession,
};
use crate::geometry::{FovMap, GazePoint};
use crate::seed::{derive_seed, rng_from};

pub const FEATURE_DIM: usize = 512;
const HIST_SIDE: usize = 8;
/// Seed of the fixed projection used to expand script parameters into features.
const FEATURE_BASIS_SEED: u64 = 0x5eed_f00d;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenePreset {
    /// Ball bouncing elastically inside the unit box.
    Bouncing,
    /// Ball looping along a piecewise-linear path that crosses the view.
    Crossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub n_scenes: usize,
    pub n_sessions_per_scene: usize,
    /// Per-session head lead is drawn uniformly from this range.
    pub head_lead_ms: [f64; 2],
    pub pursuit_gain: f64,
    pub saccade_rate_hz: f64,
    pub fixation_noise_std: f64,
    /// Fraction of gaze samples written with confidence 0.5.
    pub dropout_fraction: f64,
    pub ball_speed: [f64; 2],
    pub fov: FovMap,
    pub preset: ScenePreset,
    /// `(train, val, test)` scene counts; derived from an 18/2/2 ratio when absent.
    pub split: Option<(usize, usize, usize)>,
    pub image_side: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 10.0,
            duration_s: 60.0,
            n_scenes: 22,
            n_sessions_per_scene: 4,
            head_lead_ms: [200.0, 400.0],
            pursuit_gain: 0.7,
            saccade_rate_hz: 0.3,
            fixation_noise_std: 0.002,
            dropout_fraction: 0.02,
            ball_speed: [0.1, 0.3],
            fov: FovMap::default(),
            preset: ScenePreset::Bouncing,
            split: None,
            image_side: 64,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return bad("sample_rate_hz must be positive");
        }
        let [lo, hi] = self.head_lead_ms;
        if !(0.0..=1000.0).contains(&lo) || !(0.0..=1000.0).contains(&hi) || lo > hi {
            return bad("head_lead_ms must be an ordered range within [0, 1000]");
        }
        if !(0.0..=1.0).contains(&self.pursuit_gain) || !(0.0..=1.0).contains(&self.dropout_fraction) {
            return bad("pursuit_gain and dropout_fraction must lie in [0, 1]");
        }
        if self.saccade_rate_hz < 0.0 || self.fixation_noise_std < 0.0 || self.duration_s <= 0.0 {
            return bad("rates, noise and duration must be nonnegative");
        }
        if self.ball_speed[0] < 0.0 || self.ball_speed[0] > self.ball_speed[1] {
            return bad("ball_speed must be an ordered nonnegative range");
        }
        if self.n_scenes < 4 {
            return bad("at least 4 scenes are needed for a three-way split");
        }
        if self.image_side == 0 {
            return bad("image_side must be positive");
        }
        Ok(())
    }

    pub fn split_counts(&self) -> (usize, usize, usize) {
        self.split.unwrap_or_else(|| {
            let part = ((self.n_scenes as f64 * 2.0 / 22.0).round() as usize).max(1);
            (self.n_scenes - 2 * part, part, part)
        })
    }

    /// Gaze samples per session.
    pub fn samples_per_session(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    Bouncing { x0: f64, y0: f64, vx: f64, vy: f64 },
    /// Closed loop through `points`, traversed at constant `speed`.
    Crossing { points: Vec<[f64; 2]>, speed: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScript {
    pub scene_id: String,
    pub trajectory: Trajectory,
}

/// Folds `v` into `[0, 1]` as an elastic bounce between the walls.
fn fold_unit(v: f64) -> f64 {
    let m = v.rem_euclid(2.0);
    if m <= 1.0 {
        m
    } else {
        2.0 - m
    }
}

pub fn ball_position(script: &SceneScript, t: f64) -> (f64, f64) {
    match &script.trajectory {
        Trajectory::Bouncing { x0, y0, vx, vy } => (fold_unit(x0 + vx * t), fold_unit(y0 + vy * t)),
        Trajectory::Crossing { points, speed } => {
            let n = points.len();
            if n == 1 || *speed == 0.0 {
                return (points[0][0], points[0][1]);
            }
            let seg = |i: usize| {
                let (a, b) = (points[i], points[(i + 1) % n]);
                ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
            };
            let total: f64 = (0..n).map(seg).sum();
            let mut d = (speed * t).rem_euclid(total);
            for i in 0..n {
                let len = seg(i);
                if d <= len || i == n - 1 {
                    let f = if len > 0.0 { (d / len).min(1.0) } else { 0.0 };
                    let (a, b) = (points[i], points[(i + 1) % n]);
                    return (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]));
                }
                d -= len;
            }
            unreachable!("distance within loop length")
        }
    }
}

pub fn scene_id(index: usize) -> String {
    format!("scene{index:03}")
}

pub fn make_script(cfg: &SynthConfig, index: usize) -> SceneScript {
    let mut rng = rng_from(derive_seed(cfg.seed, index as u64));
    let speed = rng.random_range(cfg.ball_speed[0]..=cfg.ball_speed[1]);
    let trajectory = match cfg.preset {
        ScenePreset::Bouncing => {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            Trajectory::Bouncing {
                x0: rng.random_range(0.0..1.0),
                y0: rng.random_range(0.0..1.0),
                vx: speed * angle.cos(),
                vy: speed * angle.sin(),
            }
        }
        ScenePreset::Crossing => {
            let (ya, yb) = (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
            let mid = [rng.random_range(0.35..0.65), rng.random_range(0.3..0.7)];
            Trajectory::Crossing { points: vec![[0.05, ya], mid, [0.95, yb], [0.5, 0.9]], speed }
        }
    };
    SceneScript { scene_id: scene_id(index), trajectory }
}

/// Linear interpolation of a uniformly sampled track at fractional index `u`.
fn sample_track(track: &[GazePoint], u: f64) -> GazePoint {
    let i = (u.floor().max(0.0) as usize).min(track.len() - 1);
    let j = (i + 1).min(track.len() - 1);
    let f = (u - i as f64).clamp(0.0, 1.0);
    GazePoint::new(track[i].x + f * (track[j].x - track[i].x), track[i].y + f * (track[j].y - track[i].y))
}

/// One session: gaze and head share timestamps; the head points at the
/// gaze position `head_lead` later.
pub fn gen_session(script: &SceneScript, cfg: &SynthConfig, session_id: &str, session_seed: u64) -> TraceSession {
    let mut rng = rng_from(session_seed);
    let [lo, hi] = cfg.head_lead_ms;
    let lead_s = if hi > lo { rng.random_range(lo..=hi) } else { lo } / 1000.0;
    let dt = 1.0 / cfg.sample_rate_hz;
    let n = cfg.samples_per_session();
    let extra = (lead_s / dt).ceil() as usize + 1;
    let noise = Normal::new(0.0, cfg.fixation_noise_std.max(0.0)).expect("finite std");
    let p_saccade = 1.0 - (-cfg.saccade_rate_hz * dt).exp();

    let mut track = Vec::with_capacity(n + extra);
    let (bx, by) = ball_position(script, 0.0);
    let mut g = GazePoint::new(bx, by);
    for k in 0..n + extra {
        let (bx, by) = ball_position(script, k as f64 * dt);
        let jump = k > 0 && rng.random::<f64>() < p_saccade;
        let gain = if jump || k == 0 { 1.0 } else { cfg.pursuit_gain };
        let (nx, ny) = if cfg.fixation_noise_std > 0.0 { (noise.sample(&mut rng), noise.sample(&mut rng)) } else { (0.0, 0.0) };
        g = GazePoint::new(
            (gain * bx + (1.0 - gain) * g.x + nx).clamp(0.0, 1.0),
            (gain * by + (1.0 - gain) * g.y + ny).clamp(0.0, 1.0),
        );
        track.push(g);
    }

    let records = (0..n)
        .map(|k| {
            let ahead = sample_track(&track, k as f64 + lead_s / dt);
            let confidence = if rng.random::<f64>() < cfg.dropout_fraction { 0.5 } else { 1.0 };
            RawTraceRecord {
                timestamp_us: (k as f64 * dt * 1e6).round() as i64,
                gaze: Some(RawGaze { x: track[k].x, y: track[k].y, confidence }),
                head: Some(cfg.fov.orientation_for(ahead)),
                scene_id: script.scene_id.clone(),
                session_id: session_id.to_string(),
            }
        })
        .collect();
    TraceSession { scene_id: script.scene_id.clone(), session_id: session_id.to_string(), records }
}

/// 8×8 occupancy histogram of the ball path over `duration`, normalized to sum 1.
fn occupancy(script: &SceneScript, duration: f64, side: usize, samples: usize) -> Vec<f64> {
    let mut hist = vec![0.0; side * side];
    for i in 0..samples {
        let (x, y) = ball_position(script, duration * i as f64 / samples as f64);
        let cx = ((x * side as f64) as usize).min(side - 1);
        let cy = ((y * side as f64) as usize).min(side - 1);
        hist[cy * side + cx] += 1.0 / samples as f64;
    }
    hist
}

fn script_params(script: &SceneScript) -> Vec<f64> {
    match &script.trajectory {
        Trajectory::Bouncing { x0, y0, vx, vy } => vec![*x0, *y0, *vx, *vy],
        Trajectory::Crossing { points, speed } => {
            let mut v: Vec<f64> = points.iter().flatten().copied().collect();
            v.push(*speed);
            v
        }
    }
}

/// Fixed-length feature vector: a seeded sinusoidal expansion of the script
/// parameters followed by the flattened occupancy histogram.
pub fn scene_features(script: &SceneScript, duration: f64) -> Vec<f32> {
    let params = script_params(script);
    let hist = occupancy(script, duration, HIST_SIDE, 4096);
    let n_expand = FEATURE_DIM - hist.len();
    let mut basis = rng_from(FEATURE_BASIS_SEED);
    let mut out = Vec::with_capacity(FEATURE_DIM);
    for _ in 0..n_expand {
        let mut phase = basis.random_range(0.0..std::f64::consts::TAU);
        for &p in &params {
            phase += basis.random_range(-6.0..6.0) * p;
        }
        out.push((0.5 + 0.5 * phase.sin()) as f32);
    }
    let peak = hist.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    out.extend(hist.iter().map(|h| (h / peak) as f32));
    out
}

/// Grayscale rendering of the ball path, brightest where the ball spends most time.
pub fn scene_image(script: &SceneScript, duration: f64, side: usize) -> Vec<u8> {
    let hist = occupancy(script, duration, side, side * side * 4);
    let peak = hist.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    hist.iter().map(|h| ((h / peak).sqrt() * 255.0).round() as u8).collect()
}

/// Everything a corpus consists of, held in memory.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub scripts: Vec<SceneScript>,
    pub sessions: Vec<TraceSession>,
    pub store: SceneStore,
    pub split: SceneSplit,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let scripts: Vec<SceneScript> = (0..cfg.n_scenes).map(|i| make_script(cfg, i)).collect();
    let mut store = SceneStore::new(SceneKind::Features { dim: FEATURE_DIM });
    let mut sessions = Vec::with_capacity(cfg.n_scenes * cfg.n_sessions_per_scene);
    for (i, s) in scripts.iter().enumerate() {
        store.insert(&s.scene_id, scene_features(s, cfg.duration_s))?;
        let scene_seed = derive_seed(derive_seed(cfg.seed, i as u64), 0xa11ce);
        for k in 0..cfg.n_sessions_per_scene {
            let id = format!("{}-s{k:02}", s.scene_id);
            sessions.push(gen_session(s, cfg, &id, derive_seed(scene_seed, k as u64)));
        }
    }
    let ids: Vec<String> = scripts.iter().map(|s| s.scene_id.clone()).collect();
    let split = split_scenes(&ids, cfg.split_counts(), derive_seed(cfg.seed, 0x5911))?;
    Ok(SynthCorpus { config: cfg.clone(), scripts, sessions, store, split })
}

/// Writes the corpus under `root` and returns the list of files written,
/// relative to `root`, in a stable order.
pub fn write_corpus(corpus: &SynthCorpus, root: &Path) -> Result<Vec<PathBuf>, SynthError> {
    let traces = Corpus::traces_dir(root);
    let scenes = Corpus::scenes_dir(root);
    for d in [&traces, &scenes] {
        std::fs::create_dir_all(d).map_err(|e| DataError::io(d, e))?;
    }
    let mut files = Vec::new();
    for script in &corpus.scripts {
        let id = &script.scene_id;
        for session in corpus.sessions.iter().filter(|s| &s.scene_id == id) {
            let name = format!("{id}__{}.csv", session.session_id);
            write_traces(&traces.join(&name), &session.records)?;
            files.push(PathBuf::from("traces").join(name));
        }
        let sref = corpus.store.ref_of(id).expect("features generated for every script");
        write_feature_file(&scenes, id, corpus.store.get(sref))?;
        let side = corpus.config.image_side;
        write_scene_image(&scenes, id, side, &scene_image(script, corpus.config.duration_s, side))?;
        for ext in ["json", "f32", "png"] {
            files.push(PathBuf::from("scenes").join(format!("{id}.{ext}")));
        }
    }
    corpus.split.save(&Corpus::split_path(root))?;
    files.push(PathBuf::from("split.json"));
    let cfg_path = root.join("synth_config.json");
    let text = serde_json::to_string_pretty(&corpus.config).expect("config serializes");
    std::fs::write(&cfg_path, text + "\n").map_err(|e| DataError::io(&cfg_path, e))?;
    files.push(PathBuf::from("synth_config.json"));
    Ok(files)
}

pub fn gen_corpus(cfg: &SynthConfig, root: &Path) -> Result<SynthCorpus, SynthError> {
    let corpus = generate(cfg)?;
    write_corpus(&corpus, root)?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bouncing(x0: f64, y0: f64, vx: f64, vy: f64) -> SceneScript {
        SceneScript { scene_id: "s".into(), trajectory: Trajectory::Bouncing { x0, y0, vx, vy } }
    }

    #[test]
    fn fold_examples() {
        let s = bouncing(0.3, 0.7, 0.0, 0.0);
        assert_eq!(ball_position(&s, 12.5), (0.3, 0.7));
        let s = bouncing(0.0, 0.0, 1.0, 0.0);
        assert!((ball_position(&s, 0.5).0 - 0.5).abs() < 1e-12);
        assert!((ball_position(&s, 1.5).0 - 0.5).abs() < 1e-12);
        assert!((ball_position(&s, 1.0).0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crossing_path_is_continuous_loop() {
        let cfg = SynthConfig { preset: ScenePreset::Crossing, ..SynthConfig::default() };
        let s = make_script(&cfg, 3);
        let Trajectory::Crossing { speed, .. } = s.trajectory else { panic!("crossing preset") };
        let dt = 0.01;
        for i in 0..5000 {
            let t = i as f64 * dt;
            let (a, b) = (ball_position(&s, t), ball_position(&s, t + dt));
            let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
            assert!(d <= speed * dt + 1e-9);
        }
    }

    #[test]
    fn degenerate_session_tracks_ball() {
        let cfg = SynthConfig {
            pursuit_gain: 1.0,
            fixation_noise_std: 0.0,
            saccade_rate_hz: 0.0,
            head_lead_ms: [0.0, 0.0],
            dropout_fraction: 0.0,
            duration_s: 5.0,
            ..SynthConfig::default()
        };
        let script = make_script(&cfg, 0);
        let s = gen_session(&script, &cfg, "a", 1);
        for r in &s.records {
            let (bx, by) = ball_position(&script, r.timestamp_us as f64 / 1e6);
            let g = r.gaze.unwrap();
            assert!((g.x - bx).abs() < 1e-12 && (g.y - by).abs() < 1e-12);
            assert_eq!(r.head.unwrap(), cfg.fov.orientation_for(GazePoint::new(g.x, g.y)));
            assert_eq!(g.confidence, 1.0);
        }
    }

    #[test]
    fn head_points_at_future_gaze() {
        let cfg = SynthConfig { head_lead_ms: [300.0, 300.0], duration_s: 20.0, ..SynthConfig::default() };
        let script = make_script(&cfg, 1);
        let s = gen_session(&script, &cfg, "a", 2);
        for w in s.records.windows(4) {
            let est = cfg.fov.point_for(w[0].head.unwrap());
            let g = w[3].gaze.unwrap();
            assert!((est.x - g.x).abs() < 1e-9 && (est.y - g.y).abs() < 1e-9);
        }
    }

    #[test]
    fn session_determinism() {
        let cfg = SynthConfig { duration_s: 10.0, ..SynthConfig::default() };
        let script = make_script(&cfg, 2);
        assert_eq!(gen_session(&script, &cfg, "a", 9), gen_session(&script, &cfg, "a", 9));
        assert_ne!(gen_session(&script, &cfg, "a", 9), gen_session(&script, &cfg, "a", 10));
    }

    #[test]
    fn features_depend_on_script() {
        let cfg = SynthConfig::default();
        let (a, b) = (make_script(&cfg, 0), make_script(&cfg, 1));
        let (fa, fb) = (scene_features(&a, 60.0), scene_features(&b, 60.0));
        assert_eq!(fa.len(), FEATURE_DIM);
        assert_eq!(fa, scene_features(&a, 60.0));
        assert_ne!(fa, fb);
        assert!(fa.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn config_checks() {
        assert!(SynthConfig::default().validate().is_ok());
        assert_eq!(SynthConfig::default().split_counts(), (18, 2, 2));
        assert!(SynthConfig { n_scenes: 3, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { head_lead_ms: [500.0, 1500.0], ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { sample_rate_hz: 0.0, ..SynthConfig::default() }.validate().is_err());
    }
}
