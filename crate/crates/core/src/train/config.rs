use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEARNING_RATE_GRID: [f64; 4] = [1e-4, 5e-4, 1e-3, 5e-3];
pub const WEIGHT_DECAY_GRID: [f64; 4] = [0.0, 1e-6, 1e-5, 1e-4];
pub const NEGATIVES_GRID: [usize; 6] = [1 << 6, 1 << 8, 1 << 10, 1 << 12, 1 << 14, 1 << 16];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// L2 penalty folded into the gradient.
    pub weight_decay: f64,
    pub num_negatives: usize,
    pub epochs: usize,
    /// Queries per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Validate every this many epochs.
    pub eval_interval: usize,
    /// Stop after this many validations without improvement.
    pub patience: usize,
    /// Stop as soon as validation MRR reaches this value.
    pub stop_at_valid_mrr: Option<f64>,
    /// Truncate every epoch to this many optimizer steps.
    pub max_steps_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            weight_decay: 0.0,
            num_negatives: 64,
            epochs: 30,
            batch_size: 16,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            eval_interval: 1,
            patience: 5,
            stop_at_valid_mrr: None,
            max_steps_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        if self.batch_size == 0 || self.eval_interval == 0 {
            return Err(Error::Config("batch_size and eval_interval must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_eps <= 0.0 {
            return Err(Error::Config("adam betas must lie in [0, 1) and eps must be positive".into()));
        }
        if self.max_steps_per_epoch == Some(0) {
            return Err(Error::Config("max_steps_per_epoch must be at least 1".into()));
        }
        Ok(())
    }

    /// Settings that lie outside the default search grids.
    pub fn off_grid(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !LEARNING_RATE_GRID.contains(&self.learning_rate) {
            out.push(format!("learning_rate = {} not in {:?}", self.learning_rate, LEARNING_RATE_GRID));
        }
        if !WEIGHT_DECAY_GRID.contains(&self.weight_decay) {
            out.push(format!("weight_decay = {} not in {:?}", self.weight_decay, WEIGHT_DECAY_GRID));
        }
        if !NEGATIVES_GRID.contains(&self.num_negatives) {
            out.push(format!("num_negatives = {} not in {:?}", self.num_negatives, NEGATIVES_GRID));
        }
        out
    }
}
