//! The three-stage experiment: contrastive architecture search on the
//! unlabeled pool, contrastive pretraining of the derived network, and
//! classifier fitting on the labeled split, followed by weighted-F1
//! evaluation on the test split.

pub mod checkpoint;
mod classifier;
mod config;
mod encoder;
mod metrics;
mod pretrain;
mod run;

pub use classifier::{fit_classifier, Classifier, FitOutcome, CLASSIFIER_PREFIX};
pub use config::{ClassifierConfig, ClassifierLoss, PipelineConfig, PretrainConfig, StageToggles};
pub use encoder::Encoder;
pub use metrics::weighted_f1;
pub use pretrain::{pretrain, PretrainOutcome};
pub use run::{artifact, evaluate, run_pipeline, PipelineInputs, PipelineOutcome, Provenance};
