use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Sidecar describing one raw little-endian f32 feature file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub scene_id: String,
    pub dim: usize,
    /// Relative to the manifest's directory.
    pub path: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SceneKind {
    /// Precomputed backbone features of length `dim`.
    Features { dim: usize },
    /// Grayscale `side × side` image, pixels scaled to `[0, 1]`.
    Image { side: usize },
}

impl SceneKind {
    pub fn width(&self) -> usize {
        match *self {
            SceneKind::Features { dim } => dim,
            SceneKind::Image { side } => side * side,
        }
    }
}

/// Per-scene inputs keyed by `scene_id`; windows refer to entries by index.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneStore {
    kind: SceneKind,
    index: BTreeMap<String, usize>,
    data: Vec<Vec<f32>>,
}

impl SceneStore {
    pub fn new(kind: SceneKind) -> Self {
        Self { kind, index: BTreeMap::new(), data: Vec::new() }
    }

    pub fn kind(&self) -> SceneKind {
        self.kind
    }

    pub fn width(&self) -> usize {
        self.kind.width()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn insert(&mut self, scene_id: &str, values: Vec<f32>) -> Result<usize, DataError> {
        if values.len() != self.width() {
            return Err(DataError::Format {
                path: scene_id.to_string(),
                message: format!("scene input has {} values, expected {}", values.len(), self.width()),
            });
        }
        if let Some(&i) = self.index.get(scene_id) {
            self.data[i] = values;
            return Ok(i);
        }
        self.data.push(values);
        let i = self.data.len() - 1;
        self.index.insert(scene_id.to_string(), i);
        Ok(i)
    }

    pub fn ref_of(&self, scene_id: &str) -> Option<usize> {
        self.index.get(scene_id).copied()
    }

    pub fn get(&self, scene_ref: usize) -> &[f32] {
        &self.data[scene_ref]
    }

    pub fn scene_ids(&self) -> impl Iterator<Item = &String> {
        self.index.keys()
    }

    /// Loads every `*.json` feature manifest found in `dir`.
    pub fn load_features(dir: &Path, dim: usize) -> Result<Self, DataError> {
        let mut store = Self::new(SceneKind::Features { dim });
        for path in sorted_entries(dir, "json")? {
            let text = std::fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
            let m: FeatureManifest = serde_json::from_str(&text).map_err(|e| DataError::format(&path, e))?;
            if m.dim != dim {
                return Err(DataError::format(&path, format!("dim {} != expected {dim}", m.dim)));
            }
            let blob_path = dir.join(&m.path);
            let bytes = std::fs::read(&blob_path).map_err(|e| DataError::io(&blob_path, e))?;
            if bytes.len() != dim * 4 {
                return Err(DataError::format(&blob_path, format!("{} bytes, expected {}", bytes.len(), dim * 4)));
            }
            let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            store.insert(&m.scene_id, values)?;
        }
        Ok(store)
    }

    /// Loads every `<scene_id>.png` in `dir` as a grayscale image of the given side.
    pub fn load_images(dir: &Path, side: usize) -> Result<Self, DataError> {
        let mut store = Self::new(SceneKind::Image { side });
        for path in sorted_entries(dir, "png")? {
            let img = image::open(&path).map_err(|e| DataError::format(&path, e))?.to_luma8();
            if img.width() as usize != side || img.height() as usize != side {
                return Err(DataError::format(&path, format!("image is {}x{}, expected {side}x{side}", img.width(), img.height())));
            }
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            store.insert(&id, img.as_raw().iter().map(|&p| p as f32 / 255.0).collect())?;
        }
        Ok(store)
    }
}

/// Writes `<dir>/<scene_id>.f32` and its manifest `<dir>/<scene_id>.json`.
pub fn write_feature_file(dir: &Path, scene_id: &str, values: &[f32]) -> Result<(), DataError> {
    let blob = format!("{scene_id}.f32");
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let blob_path = dir.join(&blob);
    std::fs::write(&blob_path, bytes).map_err(|e| DataError::io(&blob_path, e))?;
    let manifest = FeatureManifest { scene_id: scene_id.to_string(), dim: values.len(), path: blob };
    let path = dir.join(format!("{scene_id}.json"));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| DataError::io(&path, e))
}

/// Writes an 8-bit grayscale PNG.
pub fn write_scene_image(dir: &Path, scene_id: &str, side: usize, pixels: &[u8]) -> Result<(), DataError> {
    let path = dir.join(format!("{scene_id}.png"));
    let img = image::GrayImage::from_raw(side as u32, side as u32, pixels.to_vec())
        .ok_or_else(|| DataError::format(&path, "pixel buffer does not match side"))?;
    img.save(&path).map_err(|e| DataError::format(&path, e))
}

fn sorted_entries(dir: &Path, ext: &str) -> Result<Vec<std::path::PathBuf>, DataError> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| DataError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some(ext))
        .collect();
    out.sort();
    Ok(out)
}
