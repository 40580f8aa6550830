use std::path::Path;

use super::{EpochStats, TrainError};

pub const HISTORY_COLUMNS: [&str; 11] =
    ["epoch", "train_loss", "val_loss", "val_s1", "val_s2", "val_s3", "gate_gaze", "gate_head", "gate_scene", "lr", "seconds"];

/// Writes one row per epoch. Step columns beyond the third are dropped and
/// missing ones left empty, so the header is fixed.
pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| TrainError::io(path, e))?;
    w.write_record(HISTORY_COLUMNS).map_err(|e| TrainError::io(path, e))?;
    for s in history {
        let step = |i: usize| s.val_steps.get(i).map(|v| v.to_string()).unwrap_or_default();
        let row = [
            s.epoch.to_string(),
            s.train_loss.to_string(),
            s.val_loss.to_string(),
            step(0),
            step(1),
            step(2),
            s.gates[0].to_string(),
            s.gates[1].to_string(),
            s.gates[2].to_string(),
            s.lr.to_string(),
            format!("{:.3}", s.seconds),
        ];
        w.write_record(&row).map_err(|e| TrainError::io(path, e))?;
    }
    w.flush().map_err(|e| TrainError::io(path, e))
}

/// Reads the rows back as raw fields, header excluded.
pub fn read_history_csv(path: &Path) -> Result<Vec<Vec<String>>, TrainError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| TrainError::io(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| TrainError::io(path, e))?.iter().map(String::from).collect();
    if header != HISTORY_COLUMNS {
        return Err(TrainError::io(path, "unexpected history header"));
    }
    r.records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()).map_err(|e| TrainError::io(path, e)))
        .collect()
}
