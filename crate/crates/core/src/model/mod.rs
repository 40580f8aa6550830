//! The gated multimodal predictor and its loss.

mod fusion;
mod loss;
mod net;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkernel::KernelError;

pub use fusion::{fuse, gates_from_sigmoids, GATE_NAMES};
pub use loss::{spatial_loss, total_loss, LossBreakdown};
pub use net::{Forward, ForwardCache, ForwardMode, GazeModel, ModelOutput, CONV_CHANNELS, CONV_POOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("scene input has width {got}, the {mode} scene encoder expects {expected}")]
    ModeMismatch { mode: &'static str, expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("backward called without a training-mode forward cache")]
    MissingForwardCache,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("batch is empty")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneMode {
    /// Scene input is a precomputed feature vector.
    Precomputed,
    /// Scene input is a `side × side` grayscale image fed through the conv stack.
    Conv { side: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub lstm_layers: usize,
    pub fused_proj: usize,
    pub n_in: usize,
    pub k_steps: usize,
    pub gate_hidden: usize,
    pub head_hidden: usize,
    pub scene_feature_dim: usize,
    pub spatial_weights: Vec<f64>,
    pub lambda_aux: f64,
    pub scene_mode: SceneMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            lstm_layers: 2,
            fused_proj: 256,
            n_in: 15,
            k_steps: 3,
            gate_hidden: 64,
            head_hidden: 128,
            scene_feature_dim: 512,
            spatial_weights: vec![0.5, 0.3, 0.2],
            lambda_aux: 0.5,
            scene_mode: SceneMode::Precomputed,
        }
    }
}

impl ModelConfig {
    /// Small configuration used by gradient checks and oracle tests.
    pub fn tiny() -> Self {
        Self {
            hidden: 4,
            fused_proj: 6,
            n_in: 5,
            gate_hidden: 3,
            head_hidden: 5,
            scene_feature_dim: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.spatial_weights.len() != self.k_steps {
            return bad(format!("{} spatial weights for {} steps", self.spatial_weights.len(), self.k_steps));
        }
        if self.spatial_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return bad("spatial weights must be positive".into());
        }
        if !(self.lambda_aux >= 0.0 && self.lambda_aux.is_finite()) {
            return bad("lambda_aux must be nonnegative".into());
        }
        let dims = [self.hidden, self.lstm_layers, self.fused_proj, self.n_in, self.k_steps, self.gate_hidden, self.head_hidden];
        if dims.contains(&0) {
            return bad("layer sizes must be positive".into());
        }
        match self.scene_mode {
            SceneMode::Precomputed if self.scene_feature_dim == 0 => bad("scene_feature_dim must be positive".into()),
            SceneMode::Conv { side } if side < 8 => bad(format!("conv scene side {side} is below 8")),
            _ => Ok(()),
        }
    }

    /// Width of one row of scene input expected by [`GazeModel::forward`].
    pub fn scene_input_width(&self) -> usize {
        match self.scene_mode {
            SceneMode::Precomputed => self.scene_feature_dim,
            SceneMode::Conv { side } => side * side,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig::tiny().validate().is_ok());
        let c = ModelConfig { spatial_weights: vec![0.5, 0.5], ..ModelConfig::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { lambda_aux: -0.1, ..ModelConfig::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { spatial_weights: vec![0.5, 0.0, 0.5], ..ModelConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let c: ModelConfig = serde_json::from_str(r#"{"hidden": 32, "scene_mode": {"conv": {"side": 64}}}"#).unwrap();
        assert_eq!(c.hidden, 32);
        assert_eq!(c.k_steps, 3);
        assert_eq!(c.scene_input_width(), 4096);
    }
}
