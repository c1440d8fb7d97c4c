use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::SearchConfig;
use crate::autodiff::{Tape, Tensor, Var};
use crate::batching::{eval_chunks, feature_vars, minibatches};
use crate::contrastive::{build_views, ntxent_loss, ContrastiveConfig, ProjectionHead};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nn::{Bound, ParamStore};
use crate::optim::{clip_grad_norm, Adam, Sgd};
use crate::report::{EpochRecord, Phase, ReportSink, BUILD_ID};
use crate::rng::{rng_for, stream};
use crate::searchspace::{derive_genotype, ArchParams, Genotype, SearchSpaceConfig, Supernet};

/// Prefix of encoder weights in every parameter store.
pub const ENCODER_PREFIX: &str = "enc.";
/// Prefix of projection-head weights.
pub const HEAD_PREFIX: &str = "head.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Mean validation loss under fixed views, the checkpoint criterion.
    pub eval_loss: f64,
    pub best_loss: f64,
    pub improved: bool,
    pub wallclock_ms: u64,
}

/// Everything the search loop mutates.
#[derive(Clone, Debug)]
pub struct SearchState {
    pub space: SearchSpaceConfig,
    pub contrastive: ContrastiveConfig,
    pub config: SearchConfig,
    pub seed: u64,
    pub config_hash: String,
    pub arch: ArchParams,
    /// Supernet and projection-head weights.
    pub weights: ParamStore,
    pub best_arch: ArchParams,
    pub best_loss: f64,
    pub best_epoch: Option<usize>,
    pub epoch: usize,
    pub history: Vec<EpochMetrics>,
    supernet: Supernet,
    head: ProjectionHead,
    w_opt: Sgd,
    arch_opt: Adam,
}

fn default_hash(space: &SearchSpaceConfig, contrastive: &ContrastiveConfig, config: &SearchConfig, seed: u64) -> String {
    let value = serde_json::json!({
        "space": space,
        "contrastive": contrastive,
        "search": config,
        "seed": seed,
    });
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

impl SearchState {
    pub fn new(
        space: &SearchSpaceConfig,
        contrastive: &ContrastiveConfig,
        config: &SearchConfig,
        seed: u64,
    ) -> Result<Self> {
        space.validate()?;
        contrastive.validate()?;
        config.validate()?;
        if contrastive.modality_kinds.len() != space.num_modalities() {
            return Err(Error::Config(format!(
                "{} modality kinds for {} modalities",
                contrastive.modality_kinds.len(),
                space.num_modalities()
            )));
        }
        let mut rng = rng_for(seed, &[stream::INIT_WEIGHTS]);
        let mut weights = ParamStore::new();
        let supernet = Supernet::new(space, &mut weights, ENCODER_PREFIX, &mut rng)?;
        let head = ProjectionHead::new(
            &mut weights,
            HEAD_PREFIX,
            space.output_dim(),
            contrastive.projection_hidden,
            contrastive.projection_dim,
            &mut rng,
        )?;
        let arch = ArchParams::random(space, config.arch_init_scale, &mut rng_for(seed, &[stream::INIT_ARCH]))?;
        Ok(SearchState {
            space: space.clone(),
            contrastive: contrastive.clone(),
            config: config.clone(),
            seed,
            config_hash: default_hash(space, contrastive, config, seed),
            w_opt: Sgd::new(config.weights, &weights),
            arch_opt: Adam::new(config.arch, arch.store()),
            best_arch: arch.clone(),
            arch,
            weights,
            best_loss: f64::INFINITY,
            best_epoch: None,
            epoch: 0,
            history: Vec::new(),
            supernet,
            head,
        })
    }

    pub fn supernet(&self) -> &Supernet {
        &self.supernet
    }

    pub fn head(&self) -> &ProjectionHead {
        &self.head
    }

    fn forward_loss<'t>(
        &self,
        tape: &'t Tape,
        weights: &Bound<'t>,
        arch: &Bound<'t>,
        views: &[Vec<Tensor>],
    ) -> Result<Var<'t>> {
        let features = feature_vars(tape, views);
        let h = self.supernet.forward(weights, arch, &self.arch, &features)?;
        let z = self.head.forward(weights, h)?;
        ntxent_loss(z, self.contrastive.temperature)
    }

    /// Contrastive loss on prepared views without any update.
    pub fn loss_on(&self, views: &[Vec<Tensor>]) -> Result<f64> {
        let tape = Tape::new();
        let w = self.weights.bind(&tape, false);
        let a = self.arch.store().bind(&tape, false);
        Ok(self.forward_loss(&tape, &w, &a, views)?.value().data()[0])
    }

    /// One train-phase update: operator weights move, architecture is a
    /// constant on the tape. Returns the batch loss.
    pub fn weight_step(&mut self, views: &[Vec<Tensor>]) -> Result<f64> {
        let tape = Tape::new();
        let w = self.weights.bind(&tape, true);
        let a = self.arch.store().bind(&tape, false);
        let loss = self.forward_loss(&tape, &w, &a, views)?;
        let mut grads = tape.backward(loss)?;
        let mut g = w.gradients(&mut grads);
        if self.config.grad_clip > 0.0 {
            clip_grad_norm(&mut g, self.config.grad_clip);
        }
        self.w_opt.step(&mut self.weights, &g);
        Ok(loss.value().data()[0])
    }

    /// One valid-phase update: architecture logits move, operator weights
    /// are constants on the tape. Returns the batch loss.
    pub fn arch_step(&mut self, views: &[Vec<Tensor>]) -> Result<f64> {
        let tape = Tape::new();
        let w = self.weights.bind(&tape, false);
        let a = self.arch.store().bind(&tape, true);
        let loss = self.forward_loss(&tape, &w, &a, views)?;
        let mut grads = tape.backward(loss)?;
        let mut g = a.gradients(&mut grads);
        if self.config.grad_clip > 0.0 {
            clip_grad_norm(&mut g, self.config.grad_clip);
        }
        self.arch_opt.step(self.arch.store_mut(), &g);
        Ok(loss.value().data()[0])
    }

    /// Mean contrastive loss over `dataset` under views that are fixed for
    /// the whole run, so epochs are compared on equal terms. Chunks are
    /// independent and may be evaluated in parallel.
    pub fn evaluate(&self, dataset: &Dataset, exec: Exec) -> Result<f64> {
        let chunks = eval_chunks(dataset.len(), self.config.eval_batch_size);
        let losses = exec.map(&chunks, |chunk| -> Result<(f64, usize)> {
            let views = build_views(dataset, chunk, &self.contrastive, self.seed, &[stream::EVAL_VIEWS], Exec::Sequential)?;
            Ok((self.loss_on(&views)?, chunk.len()))
        });
        let mut total = 0.0;
        let mut count = 0;
        for r in losses {
            let (loss, n) = r?;
            total += loss * n as f64;
            count += n;
        }
        Ok(total / count as f64)
    }
}

fn check_split(name: &str, split: &Dataset, space: &SearchSpaceConfig) -> Result<()> {
    if split.len() < 2 {
        return Err(Error::TooSmall(format!(
            "{name} split has {} samples; one contrastive batch needs at least 2",
            split.len()
        )));
    }
    split.check_layout(space)
}

fn record(state: &SearchState, phase: Phase, mean_loss: f64, lr: f64, started: Instant) -> EpochRecord {
    EpochRecord {
        stage: "search".into(),
        epoch: state.epoch,
        phase,
        mean_loss,
        lr,
        wallclock_ms: started.elapsed().as_millis() as u64,
        best_so_far: state.best_loss.is_finite().then_some(state.best_loss),
        config_hash: state.config_hash.clone(),
        build_id: BUILD_ID.into(),
    }
}

/// One epoch: a train phase stepping only operator weights, a valid phase
/// stepping only architecture logits, then the checkpoint evaluation.
pub fn search_epoch(
    state: &mut SearchState,
    train: &Dataset,
    valid: &Dataset,
    exec: Exec,
    sink: &mut dyn ReportSink,
) -> Result<EpochMetrics> {
    check_split("search-train", train, &state.space)?;
    check_split("search-valid", valid, &state.space)?;
    let started = Instant::now();
    state.epoch += 1;
    let epoch = state.epoch as u64;
    let seed = state.seed;

    let phase_mean = |state: &mut SearchState, data: &Dataset, phase: u64| -> Result<f64> {
        let batches = minibatches(data.len(), state.config.batch_size, seed, &[epoch, phase]);
        let mut total = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let views = build_views(data, batch, &state.contrastive, seed, &[epoch, phase, b as u64], exec)?;
            let loss = if phase == 0 { state.weight_step(&views) } else { state.arch_step(&views) };
            total += loss.inspect_err(|e| {
                log::error!("search epoch {epoch} phase {phase} batch {b}: {e}");
            })?;
        }
        Ok(total / batches.len() as f64)
    };
    let train_loss = phase_mean(state, train, 0)?;
    sink.emit(&record(state, Phase::Train, train_loss, state.config.weights.lr, started))?;
    let valid_loss = phase_mean(state, valid, 1)?;
    sink.emit(&record(state, Phase::Valid, valid_loss, state.config.arch.lr, started))?;

    let eval_loss = state.evaluate(valid, exec)?;
    let improved = eval_loss < state.best_loss;
    if improved {
        state.best_loss = eval_loss;
        state.best_arch = state.arch.clone();
        state.best_epoch = Some(state.epoch);
    }
    sink.emit(&record(state, Phase::Eval, eval_loss, 0.0, started))?;
    let metrics = EpochMetrics {
        epoch: state.epoch,
        train_loss,
        valid_loss,
        eval_loss,
        best_loss: state.best_loss,
        improved,
        wallclock_ms: started.elapsed().as_millis() as u64,
    };
    log::info!(
        "search epoch {}: train {:.4} valid {:.4} eval {:.4}{}",
        metrics.epoch,
        train_loss,
        valid_loss,
        eval_loss,
        if improved { " *" } else { "" }
    );
    state.history.push(metrics.clone());
    Ok(metrics)
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub genotype: Genotype,
    pub state: SearchState,
}

/// Runs `config.epochs` epochs and derives the genotype of the best
/// checkpoint.
#[allow(clippy::too_many_arguments)]
pub fn run_search(
    space: &SearchSpaceConfig,
    contrastive: &ContrastiveConfig,
    config: &SearchConfig,
    seed: u64,
    train: &Dataset,
    valid: &Dataset,
    exec: Exec,
    sink: &mut dyn ReportSink,
) -> Result<SearchOutcome> {
    let mut state = SearchState::new(space, contrastive, config, seed)?;
    run_search_from(&mut state, train, valid, exec, sink)?;
    Ok(SearchOutcome {
        genotype: derive_genotype(&state.best_arch, space)?,
        state,
    })
}

/// Continues `state` for its configured number of epochs.
pub fn run_search_from(
    state: &mut SearchState,
    train: &Dataset,
    valid: &Dataset,
    exec: Exec,
    sink: &mut dyn ReportSink,
) -> Result<()> {
    for _ in 0..state.config.epochs {
        search_epoch(state, train, valid, exec, sink)?;
    }
    Ok(())
}
