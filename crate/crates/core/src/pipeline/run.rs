use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::checkpoint;
use super::classifier::{fit_classifier, Classifier};
use super::config::PipelineConfig;
use super::encoder::Encoder;
use super::metrics::weighted_f1;
use super::pretrain::pretrain;
use crate::bilevel::{run_search_from, SearchState};
use crate::data::{split, split_sizes, Dataset, SplitSizes};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nn::ParamStore;
use crate::report::{ReportSink, StageReport, BUILD_ID};
use crate::rng::{derive_seed, stream};
use crate::searchspace::{derive_genotype, Genotype};

/// The configuration a run reports, and its hash.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub config: serde_json::Value,
    pub config_hash: String,
}

impl Provenance {
    /// Hashes the canonical (sorted-key) JSON form of `config`.
    pub fn of<T: Serialize>(config: &T) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let config_hash = hex::encode(Sha256::digest(config.to_string().as_bytes()));
        Ok(Provenance { config, config_hash })
    }
}

/// Artifacts supplied in place of skipped stages.
#[derive(Clone, Debug, Default)]
pub struct PipelineInputs {
    pub genotype: Option<Genotype>,
    /// Must hold the `enc.` parameters of the genotype when pretraining is
    /// skipped.
    pub weights: Option<ParamStore>,
}

/// File names inside an artifact directory.
pub mod artifact {
    pub const GENOTYPE: &str = "genotype.json";
    pub const ARCH: &str = "arch.mmnw";
    pub const ENCODER: &str = "encoder.mmnw";
    pub const CLASSIFIER: &str = "classifier.mmnw";
    pub const PREDICTIONS: &str = "predictions.json";
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub reports: Vec<StageReport>,
    pub split_sizes: SplitSizes,
    pub genotype: Option<Genotype>,
    pub search: Option<SearchState>,
    pub encoder: Option<Encoder>,
    pub classifier: Option<Classifier>,
    pub predictions: Option<Vec<Vec<u8>>>,
    pub weighted_f1: Option<f64>,
}

/// Predictions of `classifier` over `test` and their weighted F1.
pub fn evaluate(encoder: &Encoder, classifier: &Classifier, test: &Dataset, exec: Exec) -> Result<(Vec<Vec<u8>>, f64)> {
    let truth = test
        .labels()
        .ok_or_else(|| Error::MissingInput("evaluation needs a labeled split".into()))?;
    if truth.num_labels() != classifier.num_labels() {
        return Err(Error::shape(
            "evaluate",
            format!("classifier has {} labels, data has {}", classifier.num_labels(), truth.num_labels()),
        ));
    }
    let predictions = classifier.predict(&encoder.encode(test, exec)?)?;
    let f1 = weighted_f1(&predictions, &truth.rows())?;
    Ok((predictions, f1))
}

struct Emitter<'a> {
    seed: u64,
    provenance: &'a Provenance,
    sink: &'a mut dyn ReportSink,
    reports: Vec<StageReport>,
}

impl Emitter<'_> {
    fn emit(&mut self, stage: &str, metrics: BTreeMap<String, f64>, genotype: Option<&Genotype>, started: Instant) -> Result<()> {
        let report = StageReport {
            stage: stage.into(),
            metrics,
            genotype_hash: genotype.map(Genotype::hash),
            seed: self.seed,
            duration_ms: started.elapsed().as_millis() as u64,
            config_hash: self.provenance.config_hash.clone(),
            build_id: BUILD_ID.into(),
            config: self.provenance.config.clone(),
        };
        self.sink.stage(&report)?;
        self.reports.push(report);
        Ok(())
    }
}

fn write_file(dir: Option<&Path>, name: &str, bytes: &[u8]) -> Result<Option<PathBuf>> {
    let Some(dir) = dir else { return Ok(None) };
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(Some(path))
}

fn metrics<const N: usize>(pairs: [(&str, f64); N]) -> BTreeMap<String, f64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Runs the enabled stages in order: architecture search and contrastive
/// pretraining on the unlabeled pool, classifier fitting on the labeled
/// split, then evaluation on the test split. Skipped stages take their
/// outputs from `inputs`. Artifacts go to `out_dir` when given.
pub fn run_pipeline(
    config: &PipelineConfig,
    dataset: &Dataset,
    inputs: PipelineInputs,
    out_dir: Option<&Path>,
    provenance: &Provenance,
    sink: &mut dyn ReportSink,
) -> Result<PipelineOutcome> {
    config.validate()?;
    dataset.check_layout(&config.space)?;
    let stages = config.stages;
    let needs_genotype = stages.pretrain || stages.fit;
    if !stages.search && needs_genotype && inputs.genotype.is_none() {
        return Err(Error::MissingInput("search is skipped but no genotype was supplied".into()));
    }
    if !stages.pretrain && stages.fit && inputs.weights.is_none() {
        return Err(Error::MissingInput("pretraining is skipped but no encoder weights were supplied".into()));
    }
    let seed = config.seed;
    let exec = config.exec;
    let sizes = split_sizes(dataset.len(), config.labeled_ratio, &config.split)?;
    let splits = split(dataset, config.labeled_ratio, seed, &config.split)?;
    let mut out = Emitter {
        seed,
        provenance,
        sink,
        reports: Vec::new(),
    };
    let mut outcome = PipelineOutcome {
        reports: Vec::new(),
        split_sizes: sizes,
        genotype: inputs.genotype.clone(),
        search: None,
        encoder: None,
        classifier: None,
        predictions: None,
        weighted_f1: None,
    };

    if stages.search {
        let started = Instant::now();
        let mut state = SearchState::new(
            &config.space,
            &config.contrastive,
            &config.search,
            derive_seed(seed, &[stream::STAGE_SEARCH]),
        )?;
        state.config_hash = provenance.config_hash.clone();
        run_search_from(&mut state, &splits.search_train, &splits.search_valid, exec, &mut *out.sink)?;
        let genotype = derive_genotype(&state.best_arch, &config.space)?;
        genotype.validate(&config.space)?;
        write_file(out_dir, artifact::GENOTYPE, genotype.to_json().as_bytes())?;
        write_file(out_dir, artifact::ARCH, &checkpoint::encode(state.best_arch.store()))?;
        out.emit(
            "search",
            metrics([
                ("best_valid_loss", state.best_loss),
                ("best_epoch", state.best_epoch.unwrap_or(0) as f64),
                ("epochs", state.epoch as f64),
                ("train_samples", splits.search_train.len() as f64),
                ("valid_samples", splits.search_valid.len() as f64),
            ]),
            Some(&genotype),
            started,
        )?;
        outcome.genotype = Some(genotype);
        outcome.search = Some(state);
    }

    if stages.pretrain {
        let started = Instant::now();
        let genotype = outcome.genotype.as_ref().expect("checked above");
        let unlabeled = splits.search_train.concat(&splits.search_valid)?;
        let result = pretrain(
            genotype,
            &config.space,
            &config.contrastive,
            &config.pretrain,
            derive_seed(seed, &[stream::STAGE_PRETRAIN]),
            &unlabeled,
            exec,
            &provenance.config_hash,
            &mut *out.sink,
        )?;
        write_file(out_dir, artifact::ENCODER, &checkpoint::encode(&result.weights))?;
        let first = result.epoch_losses.first().copied().unwrap_or(f64::NAN);
        let last = result.epoch_losses.last().copied().unwrap_or(f64::NAN);
        let mut m = metrics([("epochs", config.pretrain.epochs as f64), ("samples", unlabeled.len() as f64)]);
        if !result.epoch_losses.is_empty() {
            m.insert("first_loss".into(), first);
            m.insert("final_loss".into(), last);
        }
        out.emit("pretrain", m, Some(genotype), started)?;
        outcome.encoder = Some(result.encoder);
    } else if let (Some(genotype), Some(weights)) = (&outcome.genotype, &inputs.weights) {
        outcome.encoder = Some(Encoder::from_weights(genotype, &config.space, weights)?);
    }

    if stages.fit {
        let started = Instant::now();
        let genotype = outcome.genotype.clone().expect("checked above");
        let encoder = outcome.encoder.as_ref().expect("checked above");
        let fit = fit_classifier(
            encoder,
            &splits.labeled_train,
            &config.classifier,
            derive_seed(seed, &[stream::STAGE_FIT]),
            exec,
            &provenance.config_hash,
            &mut *out.sink,
        )?;
        let mut store = fit.encoder.weights.clone();
        store.extend(&fit.classifier.to_store())?;
        write_file(out_dir, artifact::CLASSIFIER, &checkpoint::encode(&store))?;
        let final_loss = fit.epoch_losses.last().copied().unwrap_or(f64::NAN);
        out.emit(
            "fit",
            metrics([
                ("final_loss", final_loss),
                ("labeled_samples", splits.labeled_train.len() as f64),
            ]),
            Some(&genotype),
            started,
        )?;

        let started = Instant::now();
        let (predictions, f1) = evaluate(&fit.encoder, &fit.classifier, &splits.test, exec)?;
        let truth = splits.test.labels().expect("test split is labeled").rows();
        let zeros: Vec<Vec<u8>> = truth.iter().map(|r| vec![0; r.len()]).collect();
        let zero_f1 = weighted_f1(&zeros, &truth)?;
        let dump = serde_json::json!({ "predictions": predictions, "truth": truth });
        write_file(out_dir, artifact::PREDICTIONS, dump.to_string().as_bytes())?;
        out.emit(
            "eval",
            metrics([
                ("weighted_f1", f1),
                ("all_zero_weighted_f1", zero_f1),
                ("test_samples", splits.test.len() as f64),
            ]),
            Some(&genotype),
            started,
        )?;
        outcome.encoder = Some(fit.encoder);
        outcome.classifier = Some(fit.classifier);
        outcome.predictions = Some(predictions);
        outcome.weighted_f1 = Some(f1);
    }
    outcome.reports = out.reports;
    Ok(outcome)
}
