use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{AdamConfig, SgdConfig};

/// Settings of the alternating search loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub epochs: usize,
    /// Samples per minibatch; each contributes two views.
    pub batch_size: usize,
    /// Samples per chunk of the checkpoint evaluation pass.
    pub eval_batch_size: usize,
    /// Momentum SGD on operator weights, train phase.
    pub weights: SgdConfig,
    /// Adam on architecture logits, valid phase.
    pub arch: AdamConfig,
    /// Joint L2 clip applied to each phase's gradients; 0 disables.
    pub grad_clip: f64,
    /// Std of the Gaussian initial architecture logits.
    pub arch_init_scale: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            epochs: 30,
            batch_size: 64,
            eval_batch_size: 128,
            weights: SgdConfig {
                lr: 0.05,
                momentum: 0.9,
                weight_decay: 3e-4,
            },
            arch: AdamConfig {
                lr: 0.01,
                beta1: 0.5,
                beta2: 0.999,
                eps: 1e-8,
                weight_decay: 1e-3,
            },
            grad_clip: 5.0,
            arch_init_scale: 1e-3,
        }
    }
}

pub(crate) fn check_sgd(name: &str, c: &SgdConfig) -> Result<()> {
    if !(c.lr >= 0.0 && c.lr.is_finite()) {
        return Err(Error::Config(format!("{name}.lr must be non-negative")));
    }
    if !(0.0..1.0).contains(&c.momentum) {
        return Err(Error::Config(format!("{name}.momentum must lie in [0, 1)")));
    }
    if !(c.weight_decay >= 0.0 && c.weight_decay.is_finite()) {
        return Err(Error::Config(format!("{name}.weight_decay must be non-negative")));
    }
    Ok(())
}

pub(crate) fn check_adam(name: &str, c: &AdamConfig) -> Result<()> {
    if !(c.lr >= 0.0 && c.lr.is_finite()) {
        return Err(Error::Config(format!("{name}.lr must be non-negative")));
    }
    if !(0.0..1.0).contains(&c.beta1) || !(0.0..1.0).contains(&c.beta2) {
        return Err(Error::Config(format!("{name} betas must lie in [0, 1)")));
    }
    if !(c.eps > 0.0) || !(c.weight_decay >= 0.0 && c.weight_decay.is_finite()) {
        return Err(Error::Config(format!("{name}: eps must be positive, weight_decay non-negative")));
    }
    Ok(())
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("search.epochs must be at least 1".into()));
        }
        if self.batch_size < 2 || self.eval_batch_size < 2 {
            return Err(Error::Config("search batch sizes must be at least 2".into()));
        }
        check_sgd("search.weights", &self.weights)?;
        check_adam("search.arch", &self.arch)?;
        if !(self.grad_clip >= 0.0) || !(self.arch_init_scale >= 0.0) {
            return Err(Error::Config("grad_clip and arch_init_scale must be non-negative".into()));
        }
        Ok(())
    }
}
