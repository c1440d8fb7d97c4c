use serde::{Deserialize, Serialize};

use crate::bilevel::{check_sgd, SearchConfig};
use crate::contrastive::ContrastiveConfig;
use crate::data::SplitConfig;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::optim::SgdConfig;
use crate::searchspace::SearchSpaceConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    /// Zero leaves the encoder at its initialization.
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: SgdConfig,
    pub grad_clip: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 30,
            batch_size: 64,
            optimizer: SgdConfig {
                lr: 0.05,
                momentum: 0.9,
                weight_decay: 3e-4,
            },
            grad_clip: 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierLoss {
    /// Independent sigmoid per label with binary cross-entropy.
    Sigmoid,
    /// Softmax over labels with cross-entropy; rows must be one-hot.
    Softmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    /// Samples per step; 0 means full batch.
    pub batch_size: usize,
    /// Adam step size.
    pub lr: f64,
    /// L2 penalty `λ/2 ‖W‖²` on the weight matrix (not the bias).
    pub l2: f64,
    pub loss: ClassifierLoss,
    pub threshold: f64,
    pub freeze_encoder: bool,
    /// Expected label dimension; checked against the data when set.
    pub num_labels: Option<usize>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 300,
            batch_size: 0,
            lr: 0.01,
            l2: 1e-3,
            loss: ClassifierLoss::Sigmoid,
            threshold: 0.5,
            freeze_encoder: true,
            num_labels: None,
        }
    }
}

/// Which stages run. A skipped stage's output must be supplied when a
/// later stage runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageToggles {
    pub search: bool,
    pub pretrain: bool,
    pub fit: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            search: true,
            pretrain: true,
            fit: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Fraction of the non-test pool that keeps its labels.
    pub labeled_ratio: f64,
    pub split: SplitConfig,
    pub space: SearchSpaceConfig,
    pub contrastive: ContrastiveConfig,
    pub search: SearchConfig,
    pub pretrain: PretrainConfig,
    pub classifier: ClassifierConfig,
    pub stages: StageToggles,
    pub exec: Exec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            labeled_ratio: 0.05,
            split: SplitConfig::default(),
            space: SearchSpaceConfig::default(),
            contrastive: ContrastiveConfig::default(),
            search: SearchConfig::default(),
            pretrain: PretrainConfig::default(),
            classifier: ClassifierConfig::default(),
            stages: StageToggles::default(),
            exec: Exec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.labeled_ratio > 0.0 && self.labeled_ratio <= 1.0) {
            return Err(Error::Config(format!("labeled_ratio {} outside (0, 1]", self.labeled_ratio)));
        }
        self.split.validate()?;
        self.space.validate()?;
        self.contrastive.validate()?;
        self.search.validate()?;
        if self.pretrain.batch_size < 2 {
            return Err(Error::Config("pretrain.batch_size must be at least 2".into()));
        }
        check_sgd("pretrain.optimizer", &self.pretrain.optimizer)?;
        if !(self.pretrain.grad_clip >= 0.0) {
            return Err(Error::Config("pretrain.grad_clip must be non-negative".into()));
        }
        let c = &self.classifier;
        if !(c.lr >= 0.0 && c.lr.is_finite()) || !(c.l2 >= 0.0 && c.l2.is_finite()) {
            return Err(Error::Config("classifier lr and l2 must be non-negative".into()));
        }
        if !(c.threshold > 0.0 && c.threshold < 1.0) {
            return Err(Error::Config("classifier.threshold must lie in (0, 1)".into()));
        }
        if c.num_labels == Some(0) {
            return Err(Error::Config("classifier.num_labels must be positive".into()));
        }
        Ok(())
    }
}
