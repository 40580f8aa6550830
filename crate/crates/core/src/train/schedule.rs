use serde::{Deserialize, Serialize};

/// Relative margin a loss must beat the best so far by to count as progress.
pub const IMPROVEMENT_REL: f64 = 1e-8;

pub fn is_improvement(loss: f64, best: Option<f64>) -> bool {
    best.is_none_or(|b| loss < b - IMPROVEMENT_REL * b.abs())
}

/// Halves (by `factor`) the learning rate after `patience` epochs without progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub best: Option<f64>,
    pub bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_lr: f64) -> Self {
        Self { lr, factor, patience, min_lr, best: None, bad_epochs: 0 }
    }

    /// Records one validation loss and returns the learning rate for the next epoch.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if is_improvement(val_loss, self.best) {
            self.best = Some(val_loss);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopper {
    pub patience: usize,
    pub best: Option<f64>,
    pub bad_epochs: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, bad_epochs: 0 }
    }

    pub fn check(&mut self, val_loss: f64) -> StopDecision {
        if is_improvement(val_loss, self.best) {
            self.best = Some(val_loss);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}
