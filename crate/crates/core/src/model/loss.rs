use serde::{Deserialize, Serialize};

use crate::numkernel::{mse_loss, Mat, Real};

use super::ModelError;

/// Loss terms of one batch, in 64-bit regardless of the model precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub spatial: f64,
    /// Unweighted mean squared error of each prediction step.
    pub per_step: Vec<f64>,
    pub aux_head: f64,
    pub aux_scene: f64,
}

/// `Σ wᵢ · mean ‖predᵢ − targetᵢ‖²`. Returns the weighted sum and the
/// unweighted per-step terms.
pub fn spatial_loss<T: Real>(preds: &[Mat<T>], targets: &[Mat<T>], weights: &[f64]) -> Result<(f64, Vec<f64>), ModelError> {
    if preds.len() != weights.len() || targets.len() != weights.len() {
        return Err(crate::numkernel::KernelError::ShapeMismatch {
            op: "spatial_loss",
            expected: (weights.len(), 2),
            got: (preds.len().min(targets.len()), 2),
        }
        .into());
    }
    let mut per_step = Vec::with_capacity(weights.len());
    let mut total = 0.0;
    for ((p, t), w) in preds.iter().zip(targets).zip(weights) {
        let (l, _) = mse_loss(p, t)?;
        per_step.push(l.f64());
        total += w * l.f64();
    }
    Ok((total, per_step))
}

/// `spatial + λ (aux_head + aux_scene)`.
pub fn total_loss(spatial: f64, aux_head: f64, aux_scene: f64, lambda_aux: f64) -> Result<f64, ModelError> {
    let t = spatial + lambda_aux * (aux_head + aux_scene);
    if t.is_finite() {
        Ok(t)
    } else {
        Err(ModelError::NonFinite("total loss"))
    }
}
