use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed::rng_from;

use super::DataError;

/// Scene-disjoint partition; also the on-disk split manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

/// Sorts and deduplicates `scene_ids`, shuffles them under `seed` and cuts
/// the result into `(train, val, test)` blocks.
pub fn split_scenes(scene_ids: &[String], counts: (usize, usize, usize), seed: u64) -> Result<SceneSplit, DataError> {
    let unique: BTreeSet<&String> = scene_ids.iter().collect();
    let mut ids: Vec<String> = unique.into_iter().cloned().collect();
    let (tr, va, te) = counts;
    if tr + va + te != ids.len() {
        return Err(DataError::CountMismatch { requested: tr + va + te, available: ids.len() });
    }
    ids.shuffle(&mut rng_from(seed));
    let test = ids.split_off(tr + va);
    let val = ids.split_off(tr);
    Ok(SceneSplit { train: ids, val, test, seed })
}

impl SceneSplit {
    pub fn is_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.train.iter().chain(&self.val).chain(&self.test).all(|s| seen.insert(s))
    }

    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let text = serde_json::to_string_pretty(self).expect("split serializes");
        std::fs::write(path, text + "\n").map_err(|e| DataError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let split: SceneSplit = serde_json::from_str(&text)
            .map_err(|e| DataError::Format { path: path.display().to_string(), message: e.to_string() })?;
        if !split.is_disjoint() {
            return Err(DataError::Format { path: path.display().to_string(), message: "scene sets overlap".into() });
        }
        Ok(split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("scene{i:02}")).collect()
    }

    #[test]
    fn paper_split_sizes() {
        let s = split_scenes(&ids(22), (18, 2, 2), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (18, 2, 2));
        assert!(s.is_disjoint());
    }

    #[test]
    fn deterministic() {
        assert_eq!(split_scenes(&ids(4), (2, 1, 1), 5).unwrap(), split_scenes(&ids(4), (2, 1, 1), 5).unwrap());
        // input order does not matter
        let mut rev = ids(4);
        rev.reverse();
        assert_eq!(split_scenes(&rev, (2, 1, 1), 5).unwrap(), split_scenes(&ids(4), (2, 1, 1), 5).unwrap());
    }

    #[test]
    fn count_mismatch() {
        assert_eq!(
            split_scenes(&ids(4), (3, 1, 1), 0),
            Err(DataError::CountMismatch { requested: 5, available: 4 })
        );
    }

    #[test]
    fn exhaustive_for_many_seeds() {
        let all = ids(22);
        for seed in 0..100 {
            let s = split_scenes(&all, (18, 2, 2), seed).unwrap();
            assert!(s.is_disjoint());
            let mut got: Vec<String> = s.all().cloned().collect();
            got.sort();
            assert_eq!(got, all);
        }
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.json");
        let s = split_scenes(&ids(6), (4, 1, 1), 3).unwrap();
        s.save(&p).unwrap();
        assert_eq!(SceneSplit::load(&p).unwrap(), s);
    }
}
