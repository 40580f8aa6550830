#![allow(dead_code)]

pub mod oracle;

use foveacast_core::datapipe::Batch;
use foveacast_core::geometry::{quat_normalize, Quaternion};
use foveacast_core::model::ModelConfig;
use foveacast_core::numkernel::{Mat, Real};
use rand::Rng;

/// Random batch with unit head quaternions and targets in `[0,1]²`.
pub fn random_batch<T: Real>(cfg: &ModelConfig, rows: usize, rng: &mut impl Rng) -> Batch<T> {
    let mut u = |lo: f64, hi: f64| T::of(rng.random_range(lo..hi));
    let gaze = (0..cfg.n_in).map(|_| Mat::from_fn(rows, 2, |_, _| u(0.0, 1.0))).collect();
    let scene = Mat::from_fn(rows, cfg.scene_input_width(), |_, _| u(0.0, 1.0));
    let targets = (0..cfg.k_steps).map(|_| Mat::from_fn(rows, 2, |_, _| u(0.0, 1.0))).collect();
    let mut head = Vec::new();
    for _ in 0..cfg.n_in {
        let mut m = Mat::zeros(rows, 4);
        for r in 0..rows {
            let q = quat_normalize(Quaternion::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ))
            .unwrap_or(Quaternion::IDENTITY);
            let a = q.to_array();
            m.row_mut(r).copy_from_slice(&[T::of(a[0]), T::of(a[1]), T::of(a[2]), T::of(a[3])]);
        }
        head.push(m);
    }
    Batch { gaze, head, scene, targets, partial: false, indices: (0..rows).collect() }
}
