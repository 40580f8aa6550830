use std::sync::mpsc::sync_channel;

use rand::seq::SliceRandom;

use crate::numkernel::{Mat, Real};
use crate::seed::{derive_seed, rng_from};

use super::{DataError, SceneStore, WindowSample};

/// Window indices making up one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchIndices {
    pub indices: Vec<usize>,
    /// Set on the trailing batch when it is smaller than the batch size.
    pub partial: bool,
}

/// Ordering of one epoch's batches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    batches: Vec<BatchIndices>,
}

impl BatchPlan {
    /// Seeded shuffle; each epoch draws from its own derived stream.
    pub fn shuffled(n_windows: usize, batch_size: usize, seed: u64, epoch: u64) -> Self {
        let mut order: Vec<usize> = (0..n_windows).collect();
        order.shuffle(&mut rng_from(derive_seed(seed, epoch)));
        Self::from_order(order, batch_size)
    }

    pub fn sequential(n_windows: usize, batch_size: usize) -> Self {
        Self::from_order((0..n_windows).collect(), batch_size)
    }

    fn from_order(order: Vec<usize>, batch_size: usize) -> Self {
        let bs = batch_size.max(1);
        let batches = order
            .chunks(bs)
            .map(|c| BatchIndices { indices: c.to_vec(), partial: c.len() < bs })
            .collect();
        Self { batches }
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &BatchIndices> {
        self.batches.iter()
    }
}

/// Batch-major tensors for a set of windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    /// `n_in` matrices of `B × 2`.
    pub gaze: Vec<Mat<T>>,
    /// `n_in` matrices of `B × 4`, `(w, x, y, z)`.
    pub head: Vec<Mat<T>>,
    /// `B × scene width`.
    pub scene: Mat<T>,
    /// `k` matrices of `B × 2`.
    pub targets: Vec<Mat<T>>,
    pub partial: bool,
    pub indices: Vec<usize>,
}

impl<T: Real> Batch<T> {
    pub fn size(&self) -> usize {
        self.scene.rows()
    }

    /// Same batch with every head-orientation input set to zero.
    pub fn without_head(&self) -> Self {
        let mut b = self.clone();
        for m in &mut b.head {
            m.fill(T::zero());
        }
        b
    }
}

pub fn pack_batch<T: Real>(
    windows: &[WindowSample],
    indices: &[usize],
    store: &SceneStore,
    partial: bool,
) -> Result<Batch<T>, DataError> {
    let first = indices.first().map(|&i| &windows[i]).ok_or(DataError::EmptyBatch)?;
    let (n_in, k) = (first.gaze.len(), first.targets.len());
    let b = indices.len();
    let mut gaze = vec![Mat::zeros(b, 2); n_in];
    let mut head = vec![Mat::zeros(b, 4); n_in];
    let mut targets = vec![Mat::zeros(b, 2); k];
    let mut scene = Mat::zeros(b, store.width());
    for (r, &wi) in indices.iter().enumerate() {
        let w = &windows[wi];
        if w.gaze.len() != n_in || w.targets.len() != k {
            return Err(DataError::Format { path: w.session_id.clone(), message: "mixed window shapes in batch".into() });
        }
        for t in 0..n_in {
            gaze[t].row_mut(r).copy_from_slice(&[T::of(w.gaze[t].x), T::of(w.gaze[t].y)]);
            let q = w.head[t].to_array();
            head[t].row_mut(r).copy_from_slice(&[T::of(q[0]), T::of(q[1]), T::of(q[2]), T::of(q[3])]);
        }
        for (s, tg) in targets.iter_mut().zip(&w.targets) {
            s.row_mut(r).copy_from_slice(&[T::of(tg.x), T::of(tg.y)]);
        }
        let sref = w
            .scene_feature_ref
            .or_else(|| store.ref_of(&w.scene_id))
            .ok_or_else(|| DataError::UnknownScene(w.scene_id.clone()))?;
        for (dst, &src) in scene.row_mut(r).iter_mut().zip(store.get(sref)) {
            *dst = T::of(src as f64);
        }
    }
    Ok(Batch { gaze, head, scene, targets, partial, indices: indices.to_vec() })
}

/// Packs the batches of `plan` and hands them to `consume` in order.
///
/// With `depth > 0` packing runs on a producer thread feeding a bounded
/// queue of that depth; with `depth == 0` everything runs inline. The
/// sequence seen by `consume` is identical either way.
pub fn for_each_batch<T: Real, E: From<DataError>>(
    plan: &BatchPlan,
    windows: &[WindowSample],
    store: &SceneStore,
    depth: usize,
    mut consume: impl FnMut(usize, Batch<T>) -> Result<(), E>,
) -> Result<(), E> {
    if depth == 0 {
        for (i, b) in plan.iter().enumerate() {
            consume(i, pack_batch(windows, &b.indices, store, b.partial)?)?;
        }
        return Ok(());
    }
    std::thread::scope(|scope| {
        let (tx, rx) = sync_channel::<Result<Batch<T>, DataError>>(depth);
        scope.spawn(move || {
            for b in plan.iter() {
                if tx.send(pack_batch(windows, &b.indices, store, b.partial)).is_err() {
                    break;
                }
            }
        });
        for (i, packed) in rx.iter().enumerate() {
            consume(i, packed?)?;
        }
        Ok(())
    })
}
