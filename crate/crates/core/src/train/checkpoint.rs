use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{GazeModel, ModelConfig};
use crate::numkernel::{Parameterized, Real};

use super::{TrainError, TrainState};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Element offset of this parameter inside each blob section.
    pub offset: usize,
    /// Adam step count.
    pub step: u64,
}

/// JSON half of a checkpoint. The blob holds three sections of
/// `total_values` elements each: values, first moments, second moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub dtype: String,
    pub model_config: ModelConfig,
    pub params: Vec<ParamEntry>,
    pub total_values: usize,
    pub blob: String,
    pub state: TrainState,
}

pub struct Checkpoint<T> {
    pub model: GazeModel<T>,
    pub state: TrainState,
}

/// Path of the raw blob that accompanies a manifest.
pub fn blob_path(manifest: &Path) -> PathBuf {
    let mut name = manifest.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".bin");
    manifest.with_file_name(name)
}

pub fn save_checkpoint<T: Real>(path: &Path, model: &GazeModel<T>, state: &TrainState) -> Result<(), TrainError> {
    let params = model.params();
    let mut entries = Vec::with_capacity(params.len());
    let mut offset = 0;
    for p in &params {
        let (r, c) = p.shape();
        entries.push(ParamEntry { name: p.name.clone(), shape: [r, c], offset, step: p.step });
        offset += p.len();
    }
    let mut blob = Vec::with_capacity(offset * 3 * T::BYTES);
    for section in 0..3 {
        for p in &params {
            let buf = match section {
                0 => &p.value,
                1 => &p.m,
                _ => &p.v,
            };
            for &v in buf.data() {
                v.write_le(&mut blob);
            }
        }
    }
    let bin = blob_path(path);
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        dtype: T::DTYPE.to_string(),
        model_config: model.config().clone(),
        params: entries,
        total_values: offset,
        blob: bin.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        state: state.clone(),
    };
    std::fs::write(&bin, &blob).map_err(|e| TrainError::io(&bin, e))?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(path, text + "\n").map_err(|e| TrainError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<CheckpointManifest, TrainError> {
    let text = std::fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| TrainError::CorruptManifest(format!("{}: {e}", path.display())))?;
    if let Some(v) = value.get("format_version").and_then(|v| v.as_u64()) {
        if v != FORMAT_VERSION as u64 {
            return Err(TrainError::VersionMismatch { found: v as u32, expected: FORMAT_VERSION });
        }
    }
    serde_json::from_value(value).map_err(|e| TrainError::CorruptManifest(format!("{}: {e}", path.display())))
}

fn decode(bytes: &[u8], dtype: &str, count: usize, start: usize) -> Vec<f64> {
    match dtype {
        "f32" => (0..count).map(|i| f32::read_le(&bytes[(start + i) * 4..]) as f64).collect(),
        _ => (0..count).map(|i| f64::read_le(&bytes[(start + i) * 8..])).collect(),
    }
}

/// Loads into precision `T`. Values saved in the same precision come back bit-for-bit.
pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>, TrainError> {
    let manifest = read_manifest(path)?;
    let width = match manifest.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(TrainError::CorruptManifest(format!("unknown dtype {other}"))),
    };
    let bin = path.with_file_name(&manifest.blob);
    let bytes = std::fs::read(&bin).map_err(|e| TrainError::io(&bin, e))?;
    let n = manifest.total_values;
    if bytes.len() != 3 * n * width {
        return Err(TrainError::CorruptManifest(format!(
            "{}: blob has {} bytes, manifest describes {}",
            bin.display(),
            bytes.len(),
            3 * n * width
        )));
    }
    let mut model = GazeModel::<T>::new(manifest.model_config.clone(), 0)?;
    let mut params = model.params_mut();
    if params.len() != manifest.params.len() {
        return Err(TrainError::CorruptManifest(format!(
            "{} parameters in manifest, model has {}",
            manifest.params.len(),
            params.len()
        )));
    }
    let same_dtype = manifest.dtype == T::DTYPE;
    for (p, e) in params.iter_mut().zip(&manifest.params) {
        if p.name != e.name {
            return Err(TrainError::CorruptManifest(format!("expected parameter {}, found {}", p.name, e.name)));
        }
        let (r, c) = p.shape();
        if [r, c] != e.shape {
            return Err(TrainError::ShapeMismatch { name: e.name.clone(), expected: [r, c], found: e.shape });
        }
        if e.offset + r * c > n {
            return Err(TrainError::CorruptManifest(format!("parameter {} runs past the blob", e.name)));
        }
        p.step = e.step;
        for (section, buf) in [&mut p.value, &mut p.m, &mut p.v].into_iter().enumerate() {
            let start = section * n + e.offset;
            if same_dtype {
                for (i, d) in buf.data_mut().iter_mut().enumerate() {
                    *d = T::read_le(&bytes[(start + i) * width..]);
                }
            } else {
                for (d, s) in buf.data_mut().iter_mut().zip(decode(&bytes, &manifest.dtype, r * c, start)) {
                    *d = T::of(s);
                }
            }
        }
    }
    Ok(Checkpoint { model, state: manifest.state })
}
