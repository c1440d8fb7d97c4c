use std::time::Instant;

use rand::seq::SliceRandom;

use super::config::{ClassifierConfig, ClassifierLoss};
use super::encoder::Encoder;
use crate::autodiff::{Tape, Tensor, Var};
use crate::batching::feature_vars;
use crate::data::{Dataset, Labels};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nn::{Bound, Linear, ParamStore};
use crate::optim::{Adam, AdamConfig};
use crate::report::{EpochRecord, Phase, ReportSink, BUILD_ID};
use crate::rng::{rng_for, stream};

pub const CLASSIFIER_PREFIX: &str = "clf.";
const FC: &str = "clf.fc";
const NORM_MEAN: &str = "clf.norm.mean";
const NORM_SCALE: &str = "clf.norm.scale";

/// Linear layer over standardized encoder outputs. The standardization
/// statistics come from the labeled split and stay fixed.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub linear: Linear,
    /// `clf.fc.*` weights.
    pub weights: ParamStore,
    pub mean: Tensor,
    pub scale: Tensor,
    pub loss: ClassifierLoss,
    pub threshold: f64,
}

impl Classifier {
    pub fn num_labels(&self) -> usize {
        self.linear.out_dim
    }

    /// Weights plus standardization statistics under `clf.` names.
    pub fn to_store(&self) -> ParamStore {
        let mut s = self.weights.clone();
        s.add(NORM_MEAN, self.mean.clone()).expect("fresh name");
        s.add(NORM_SCALE, self.scale.clone()).expect("fresh name");
        s
    }

    pub fn from_store(store: &ParamStore, loss: ClassifierLoss, threshold: f64) -> Result<Self> {
        let get = |name: &str| {
            store
                .by_name(name)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
        };
        let w = get(&format!("{FC}.w"))?;
        let (in_dim, out_dim) = (w.rows(), w.cols());
        let mut weights = ParamStore::new();
        let linear = Linear::new(&mut weights, FC, in_dim, out_dim, true, &mut rng_for(0, &[]))?;
        weights.load_from(store)?;
        let (mean, scale) = (get(NORM_MEAN)?, get(NORM_SCALE)?);
        if mean.shape() != [1, in_dim] || scale.shape() != [1, in_dim] {
            return Err(Error::Checkpoint("standardization statistics do not match the classifier".into()));
        }
        Ok(Classifier {
            linear,
            weights,
            mean,
            scale,
            loss,
            threshold,
        })
    }

    fn logits<'t>(&self, params: &Bound<'t>, h: Var<'t>) -> Result<Var<'t>> {
        let tape = h.tape();
        let x = h
            .sub(tape.constant(self.mean.clone()))?
            .div(tape.constant(self.scale.clone()))?;
        self.linear.forward(params, x)
    }

    /// Class probabilities for each row of `h`.
    pub fn probabilities(&self, h: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let p = self.weights.bind(&tape, false);
        let logits = self.logits(&p, tape.constant(h.clone()))?;
        let probs = match self.loss {
            ClassifierLoss::Sigmoid => logits.sigmoid()?,
            ClassifierLoss::Softmax => logits.softmax(1)?,
        };
        Ok(probs.value().as_ref().clone())
    }

    /// Thresholded predictions (sigmoid mode) or one-hot argmax (softmax
    /// mode).
    pub fn predict(&self, h: &Tensor) -> Result<Vec<Vec<u8>>> {
        let probs = self.probabilities(h)?;
        Ok((0..probs.rows())
            .map(|i| {
                let row = probs.row(i);
                match self.loss {
                    ClassifierLoss::Sigmoid => row.iter().map(|&p| u8::from(p > self.threshold)).collect(),
                    ClassifierLoss::Softmax => {
                        let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                        (0..row.len()).map(|j| u8::from(j == best)).collect()
                    }
                }
            })
            .collect())
    }
}

fn label_tensor(labels: &Labels, rows: &[usize]) -> Tensor {
    let data = rows
        .iter()
        .flat_map(|&i| labels.row(i).iter().map(|&b| f64::from(b)))
        .collect();
    Tensor::from_parts(vec![rows.len(), labels.num_labels()], data)
}

/// Mean classification loss of `logits` against 0/1 `targets`, plus the
/// L2 penalty on `weight`.
fn objective<'t>(
    logits: Var<'t>,
    targets: Var<'t>,
    kind: ClassifierLoss,
    weight: Var<'t>,
    l2: f64,
) -> Result<Var<'t>> {
    let data = match kind {
        // softplus(x) − x·y is −[y ln σ(x) + (1 − y) ln(1 − σ(x))].
        ClassifierLoss::Sigmoid => logits.softplus()?.sub(logits.mul(targets)?)?.mean()?,
        ClassifierLoss::Softmax => {
            let rows = logits.value().rows() as f64;
            let picked = logits.mul(targets)?.sum_axis(1)?;
            logits.logsumexp(1)?.sub(picked)?.sum()?.scale(1.0 / rows)?
        }
    };
    if l2 > 0.0 {
        data.add(weight.mul(weight)?.sum()?.scale(0.5 * l2)?)
    } else {
        Ok(data)
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub classifier: Classifier,
    /// The encoder after fitting; unchanged when it was frozen.
    pub encoder: Encoder,
    pub epoch_losses: Vec<f64>,
}

fn standardization(h: &Tensor) -> (Tensor, Tensor) {
    let (n, d) = (h.rows(), h.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(h.row(i)) {
            *m += v / n as f64;
        }
    }
    let mut var = vec![0.0; d];
    for i in 0..n {
        for ((s, v), m) in var.iter_mut().zip(h.row(i)).zip(&mean) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    let scale = var
        .into_iter()
        .map(|v| if v.sqrt() > 1e-8 { v.sqrt() } else { 1.0 })
        .collect();
    (
        Tensor::from_parts(vec![1, d], mean),
        Tensor::from_parts(vec![1, d], scale),
    )
}

/// Fits a linear classification layer on encoder outputs of the labeled
/// split. The projection head plays no part: only `h` is used.
pub fn fit_classifier(
    encoder: &Encoder,
    labeled: &Dataset,
    config: &ClassifierConfig,
    seed: u64,
    exec: Exec,
    config_hash: &str,
    sink: &mut dyn ReportSink,
) -> Result<FitOutcome> {
    let labels = labeled
        .labels()
        .ok_or_else(|| Error::MissingInput("classifier fitting needs a labeled split".into()))?;
    if labeled.is_empty() {
        return Err(Error::Empty("labeled split is empty".into()));
    }
    let num_labels = labels.num_labels();
    if let Some(expected) = config.num_labels {
        if expected != num_labels {
            return Err(Error::shape(
                "fit_classifier",
                format!("configured for {expected} labels, data has {num_labels}"),
            ));
        }
    }
    if config.loss == ClassifierLoss::Softmax && (0..labels.len()).any(|i| labels.row(i).iter().map(|&b| b as usize).sum::<usize>() != 1) {
        return Err(Error::Config("softmax loss needs exactly one positive label per row".into()));
    }

    let h_all = encoder.encode(labeled, exec)?;
    let (mean, scale) = standardization(&h_all);
    let mut weights = ParamStore::new();
    let mut rng = rng_for(seed, &[stream::CLASSIFIER]);
    let linear = Linear::new(&mut weights, FC, encoder.output_dim(), num_labels, true, &mut rng)?;
    let mut classifier = Classifier {
        linear,
        weights,
        mean,
        scale,
        loss: config.loss,
        threshold: config.threshold,
    };

    let mut encoder = encoder.clone();
    let adam = AdamConfig {
        lr: config.lr,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: 0.0,
    };
    let mut clf_opt = Adam::new(adam, &classifier.weights);
    let mut enc_opt = (!config.freeze_encoder).then(|| Adam::new(adam, &encoder.weights));
    let n = labeled.len();
    let batch = if config.batch_size == 0 { n } else { config.batch_size.min(n) };
    let started = Instant::now();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    for epoch in 1..=config.epochs as u64 {
        let mut order: Vec<usize> = (0..n).collect();
        if batch < n {
            order.shuffle(&mut rng_for(seed, &[stream::CLASSIFIER, epoch]));
        }
        let mut total = 0.0;
        for rows in order.chunks(batch) {
            let tape = Tape::new();
            let pc = classifier.weights.bind(&tape, true);
            let pe = enc_opt.as_ref().map(|_| encoder.weights.bind(&tape, true));
            let h = match &pe {
                Some(pe) => encoder.forward(pe, &feature_vars(&tape, &labeled.gather(rows)?))?,
                None => tape.constant(h_all.select_rows(rows)),
            };
            let logits = classifier.logits(&pc, h)?;
            let targets = tape.constant(label_tensor(labels, rows));
            let loss = objective(logits, targets, config.loss, pc.var(classifier.linear.weight), config.l2)?;
            let mut grads = tape.backward(loss)?;
            clf_opt.step(&mut classifier.weights, &pc.gradients(&mut grads));
            if let (Some(opt), Some(pe)) = (enc_opt.as_mut(), &pe) {
                opt.step(&mut encoder.weights, &pe.gradients(&mut grads));
            }
            total += loss.value().data()[0] * rows.len() as f64;
        }
        let mean_loss = total / n as f64;
        best = best.min(mean_loss);
        epoch_losses.push(mean_loss);
        sink.emit(&EpochRecord {
            stage: "fit".into(),
            epoch: epoch as usize,
            phase: Phase::Train,
            mean_loss,
            lr: config.lr,
            wallclock_ms: started.elapsed().as_millis() as u64,
            best_so_far: Some(best),
            config_hash: config_hash.into(),
            build_id: BUILD_ID.into(),
        })?;
    }
    Ok(FitOutcome {
        classifier,
        encoder,
        epoch_losses,
    })
}
