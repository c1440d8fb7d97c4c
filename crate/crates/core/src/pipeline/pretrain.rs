use std::time::Instant;

use super::config::PretrainConfig;
use super::encoder::Encoder;
use crate::autodiff::Tape;
use crate::batching::{feature_vars, minibatches};
use crate::bilevel::HEAD_PREFIX;
use crate::contrastive::{build_views, ntxent_loss, ContrastiveConfig, ProjectionHead};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nn::ParamStore;
use crate::optim::{clip_grad_norm, Sgd};
use crate::report::{EpochRecord, Phase, ReportSink, BUILD_ID};
use crate::rng::{rng_for, stream};
use crate::searchspace::{Genotype, SearchSpaceConfig};

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub encoder: Encoder,
    pub head: ProjectionHead,
    /// Encoder and head weights together.
    pub weights: ParamStore,
    pub epoch_losses: Vec<f64>,
}

/// Contrastive training of a freshly initialized derived network plus a
/// projection head. Only operator weights exist at this point.
#[allow(clippy::too_many_arguments)]
pub fn pretrain(
    genotype: &Genotype,
    space: &SearchSpaceConfig,
    contrastive: &ContrastiveConfig,
    config: &PretrainConfig,
    seed: u64,
    unlabeled: &Dataset,
    exec: Exec,
    config_hash: &str,
    sink: &mut dyn ReportSink,
) -> Result<PretrainOutcome> {
    contrastive.validate()?;
    let encoder = Encoder::new(genotype, space, seed)?;
    let mut weights = encoder.weights.clone();
    let head = ProjectionHead::new(
        &mut weights,
        HEAD_PREFIX,
        encoder.output_dim(),
        contrastive.projection_hidden,
        contrastive.projection_dim,
        &mut rng_for(seed, &[stream::PRETRAIN, stream::INIT_WEIGHTS]),
    )?;
    if config.epochs > 0 {
        if unlabeled.len() < 2 {
            return Err(Error::TooSmall(format!(
                "pretraining split has {} samples; one contrastive batch needs at least 2",
                unlabeled.len()
            )));
        }
        unlabeled.check_layout(space)?;
    }
    let mut opt = Sgd::new(config.optimizer, &weights);
    let started = Instant::now();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    for epoch in 1..=config.epochs as u64 {
        let batches = minibatches(unlabeled.len(), config.batch_size, seed, &[stream::PRETRAIN, epoch]);
        let mut total = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let views = build_views(unlabeled, batch, contrastive, seed, &[stream::PRETRAIN, epoch, b as u64], exec)?;
            let tape = Tape::new();
            let w = weights.bind(&tape, true);
            let h = encoder.forward(&w, &feature_vars(&tape, &views))?;
            let loss = ntxent_loss(head.forward(&w, h)?, contrastive.temperature).inspect_err(|e| {
                log::error!("pretrain epoch {epoch} batch {b}: {e}");
            })?;
            let mut grads = tape.backward(loss)?;
            let mut g = w.gradients(&mut grads);
            if config.grad_clip > 0.0 {
                clip_grad_norm(&mut g, config.grad_clip);
            }
            opt.step(&mut weights, &g);
            total += loss.value().data()[0];
        }
        let mean = total / batches.len() as f64;
        best = best.min(mean);
        epoch_losses.push(mean);
        log::info!("pretrain epoch {epoch}: loss {mean:.4}");
        sink.emit(&EpochRecord {
            stage: "pretrain".into(),
            epoch: epoch as usize,
            phase: Phase::Train,
            mean_loss: mean,
            lr: config.optimizer.lr,
            wallclock_ms: started.elapsed().as_millis() as u64,
            best_so_far: Some(best),
            config_hash: config_hash.into(),
            build_id: BUILD_ID.into(),
        })?;
    }
    if let (Some(first), Some(last)) = (epoch_losses.first(), epoch_losses.last()) {
        if epoch_losses.len() > 1 && last >= first {
            log::warn!("pretraining loss did not decrease: {first:.4} -> {last:.4}");
        }
    }
    let mut trained = encoder;
    trained.weights.load_from(&weights)?;
    Ok(PretrainOutcome {
        encoder: trained,
        head,
        weights,
        epoch_losses,
    })
}
