//! ℓ1 objective, Adam, the learning-rate staircase, and the training loop.

mod adam;
mod trainer;

pub use adam::{Adam, AdamConfig};
pub use trainer::{mean_loss, EpochRecord, FitReport, TrainSample, Trainer, LOSS_CSV_HEADER};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;
use crate::tensor::{Graph, Real, TensorError, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite {what} at epoch {epoch}, step {step}: {detail}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        step: u64,
        detail: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// The learning rate halves after every `halve_every` epochs.
    pub halve_every: usize,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
    /// Global gradient-norm ceiling; off by default.
    #[serde(default)]
    pub clip_grad_norm: Option<f64>,
    /// Epochs between `last` checkpoint writes; the final epoch is always written.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

fn default_checkpoint_every() -> usize {
    1
}

impl TrainConfig {
    pub fn new(lr0: f64, epochs: usize, batch_size: usize, halve_every: usize) -> Self {
        TrainConfig {
            lr0,
            epochs,
            batch_size,
            halve_every,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            seed: 0,
            clip_grad_norm: None,
            checkpoint_every: default_checkpoint_every(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |m: String| Err(TrainError::Config(m));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return err(format!("lr0 must be positive, got {}", self.lr0));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return err(format!("{name} = {b} outside [0, 1)"));
            }
        }
        if !(self.eps > 0.0) {
            return err(format!("eps must be positive, got {}", self.eps));
        }
        if self.batch_size == 0 || self.halve_every == 0 || self.checkpoint_every == 0 {
            return err("batch_size, halve_every and checkpoint_every must be >= 1".into());
        }
        if let Some(c) = self.clip_grad_norm {
            if !(c > 0.0) {
                return err(format!("clip_grad_norm must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// `lr0 · 0.5^⌊epoch / halve_every⌋`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let halvings = (epoch / cfg.halve_every.max(1)).min(i32::MAX as usize) as i32;
    cfg.lr0 * 0.5f64.powi(halvings)
}

/// Mean over the leading (batch) axis of per-sample `‖pred − target‖₁`.
pub fn l1_loss<T: Real>(g: &mut Graph<T>, pred: Var, target: Var) -> Result<Var, TensorError> {
    let m = g.shape(pred).first().copied().unwrap_or(1).max(1);
    let d = g.sub(pred, target)?;
    let d = g.abs(d)?;
    let s = g.sum(d)?;
    if m == 1 {
        Ok(s)
    } else {
        g.scale(s, 1.0 / m as f64)
    }
}
