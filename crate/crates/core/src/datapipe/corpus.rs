use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::{ingest_traces, session_windows, DataError, PipelineConfig, PipelineStats, SceneKind, SceneSplit, SceneStore, TraceSession, WindowSample};

/// On-disk corpus: `traces/*.csv`, `scenes/` and `split.json` under one root.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub sessions: Vec<TraceSession>,
    pub store: SceneStore,
    pub split: SceneSplit,
}

impl Corpus {
    pub fn traces_dir(root: &Path) -> PathBuf {
        root.join("traces")
    }

    pub fn scenes_dir(root: &Path) -> PathBuf {
        root.join("scenes")
    }

    pub fn split_path(root: &Path) -> PathBuf {
        root.join("split.json")
    }

    pub fn load(root: &Path, kind: SceneKind) -> Result<Self, DataError> {
        let traces = Self::traces_dir(root);
        let mut files: Vec<PathBuf> = std::fs::read_dir(&traces)
            .map_err(|e| DataError::io(&traces, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
            .collect();
        files.sort();
        let mut sessions = Vec::new();
        for f in &files {
            sessions.extend(ingest_traces(f)?);
        }
        let scenes = Self::scenes_dir(root);
        let store = match kind {
            SceneKind::Features { dim } => SceneStore::load_features(&scenes, dim)?,
            SceneKind::Image { side } => SceneStore::load_images(&scenes, side)?,
        };
        let split = SceneSplit::load(&Self::split_path(root))?;
        Ok(Self { root: root.to_path_buf(), sessions, store, split })
    }

    pub fn scene_ids(&self) -> Vec<String> {
        let ids: BTreeSet<&String> = self.sessions.iter().map(|s| &s.scene_id).collect();
        ids.into_iter().cloned().collect()
    }
}

/// Windows of each split partition.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub stats: PipelineStats,
    /// Windows whose scene is in none of the partitions.
    pub unassigned: usize,
}

impl Dataset {
    pub fn build(sessions: &[TraceSession], split: &SceneSplit, store: &SceneStore, cfg: &PipelineConfig) -> Result<Self, DataError> {
        let train: BTreeSet<&str> = split.train.iter().map(String::as_str).collect();
        let val: BTreeSet<&str> = split.val.iter().map(String::as_str).collect();
        let test: BTreeSet<&str> = split.test.iter().map(String::as_str).collect();
        let mut ds = Dataset::default();
        for s in sessions {
            let (w, stats) = session_windows(s, cfg, Some(store))?;
            ds.stats.merge(&stats);
            if w.is_empty() {
                continue;
            }
            if store.ref_of(&s.scene_id).is_none() {
                return Err(DataError::UnknownScene(s.scene_id.clone()));
            }
            let id = s.scene_id.as_str();
            if train.contains(id) {
                ds.train.extend(w);
            } else if val.contains(id) {
                ds.val.extend(w);
            } else if test.contains(id) {
                ds.test.extend(w);
            } else {
                ds.unassigned += w.len();
            }
        }
        Ok(ds)
    }

    pub fn from_corpus(c: &Corpus, cfg: &PipelineConfig) -> Result<Self, DataError> {
        Self::build(&c.sessions, &c.split, &c.store, cfg)
    }
}
