//! Synthetic multimodal benchmark with planted cross-modal structure.
//!
//! Each sample draws a latent `z ~ N(0, I_k)`. A planted layer is
//! `√(s/(1+s)) · A z + √(1/(1+s)) · ε` for signal-to-noise ratio `s`, with
//! a fixed Gaussian map `A` scaled so every coordinate has unit variance.
//! Other layers are pure `N(0, 1)` noise. Label `j` is the indicator
//! `w_j·z + η ε > t_j`, where the threshold `t_j` gives label `j` a
//! decreasing prevalence, so classes are imbalanced by construction.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::dataset::{Dataset, Labels};
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};
use crate::searchspace::Source;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub num_samples: usize,
    /// `layer_dims[m][l]`: width of layer `l` of modality `m`.
    pub layer_dims: Vec<Vec<usize>>,
    pub num_labels: usize,
    pub latent_dim: usize,
    /// Layers that carry the shared latent.
    pub planted: Vec<Source>,
    /// Signal-to-noise ratio of planted layers; `None` means noiseless.
    pub snr: Option<f64>,
    /// Noise added to the label scores, relative to the unit-variance signal.
    pub label_noise: f64,
    /// Prevalence of label 0; label `j` gets `p0 · decay^j`, floored at 2%.
    pub base_prevalence: f64,
    pub prevalence_decay: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_samples: 2000,
            layer_dims: vec![vec![32, 32], vec![32, 32]],
            num_labels: 6,
            latent_dim: 4,
            planted: vec![
                Source::Feature { modality: 0, layer: 1 },
                Source::Feature { modality: 1, layer: 0 },
            ],
            snr: Some(10.0),
            label_noise: 0.25,
            base_prevalence: 0.4,
            prevalence_decay: 0.65,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.num_samples == 0 {
            return err("num_samples must be positive");
        }
        if self.layer_dims.is_empty() || self.layer_dims.iter().any(Vec::is_empty) {
            return err("every modality needs at least one layer");
        }
        if self.layer_dims.iter().flatten().any(|&d| d == 0) {
            return err("layer dims must be positive");
        }
        if self.num_labels == 0 {
            return err("num_labels must be positive");
        }
        if self.latent_dim == 0 {
            return err("latent_dim must be positive");
        }
        for src in &self.planted {
            match *src {
                Source::Feature { modality, layer }
                    if modality < self.layer_dims.len() && layer < self.layer_dims[modality].len() => {}
                other => return err(&format!("planted source {other} is not a backbone layer")),
            }
        }
        for m in 0..self.layer_dims.len() {
            if !self.planted.iter().any(|s| matches!(s, Source::Feature { modality, .. } if *modality == m)) {
                return err(&format!("modality {m} has no planted layer"));
            }
        }
        if let Some(s) = self.snr {
            if !(s > 0.0 && s.is_finite()) {
                return err("snr must be positive and finite (use null for noiseless)");
            }
        }
        if !(self.label_noise >= 0.0 && self.label_noise.is_finite()) {
            return err("label_noise must be non-negative");
        }
        if !(self.base_prevalence > 0.0 && self.base_prevalence < 1.0) {
            return err("base_prevalence must lie in (0, 1)");
        }
        if !(self.prevalence_decay > 0.0 && self.prevalence_decay <= 1.0) {
            return err("prevalence_decay must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn is_planted(&self, modality: usize, layer: usize) -> bool {
        self.planted.contains(&Source::Feature { modality, layer })
    }

    pub fn prevalence(&self, label: usize) -> f64 {
        (self.base_prevalence * self.prevalence_decay.powi(label as i32)).max(0.02)
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws the dataset described by `spec`. Feature values are rounded to
/// `f32` so the in-memory dataset equals its on-disk form.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let (n, k) = (spec.num_samples, spec.latent_dim);
    let mut rng = rng_for(spec.seed, &[stream::GENERATE]);

    // Fixed maps, drawn before any per-sample value.
    let mut maps = Vec::new();
    for (m, dims) in spec.layer_dims.iter().enumerate() {
        for (l, &d) in dims.iter().enumerate() {
            if spec.is_planted(m, l) {
                let a: Vec<f64> = (0..d * k).map(|_| gaussian(&mut rng) / (k as f64).sqrt()).collect();
                maps.push(Some(a));
            } else {
                maps.push(None);
            }
        }
    }
    let mut label_dirs = Vec::new();
    for _ in 0..spec.num_labels {
        let mut w: Vec<f64> = (0..k).map(|_| gaussian(&mut rng)).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        w.iter_mut().for_each(|v| *v /= norm);
        label_dirs.push(w);
    }
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let thresholds: Vec<f64> = (0..spec.num_labels)
        .map(|j| std_normal.inverse_cdf(1.0 - spec.prevalence(j)))
        .collect();

    let (signal, noise) = match spec.snr {
        Some(s) => ((s / (1.0 + s)).sqrt(), (1.0 / (1.0 + s)).sqrt()),
        None => (1.0, 0.0),
    };
    let label_scale = 1.0 / (1.0 + spec.label_noise * spec.label_noise).sqrt();

    let mut features: Vec<Vec<Vec<f64>>> = spec
        .layer_dims
        .iter()
        .map(|dims| dims.iter().map(|&d| Vec::with_capacity(n * d)).collect())
        .collect();
    let mut bits = Vec::with_capacity(n * spec.num_labels);
    for _ in 0..n {
        let z: Vec<f64> = (0..k).map(|_| gaussian(&mut rng)).collect();
        let mut flat = 0;
        for (m, dims) in spec.layer_dims.iter().enumerate() {
            for (l, &d) in dims.iter().enumerate() {
                let block = &mut features[m][l];
                match &maps[flat] {
                    Some(a) => {
                        for i in 0..d {
                            let az: f64 = (0..k).map(|j| a[i * k + j] * z[j]).sum();
                            let eps = if noise > 0.0 { gaussian(&mut rng) } else { 0.0 };
                            block.push(f64::from((signal * az + noise * eps) as f32));
                        }
                    }
                    None => {
                        for _ in 0..d {
                            block.push(f64::from(gaussian(&mut rng) as f32));
                        }
                    }
                }
                flat += 1;
            }
        }
        for (w, &t) in label_dirs.iter().zip(&thresholds) {
            let score: f64 = w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
            let eta = if spec.label_noise > 0.0 { spec.label_noise * gaussian(&mut rng) } else { 0.0 };
            bits.push(u8::from((score + eta) * label_scale > t));
        }
    }
    Dataset::new(
        spec.layer_dims.clone(),
        features,
        Some(Labels::new(spec.num_labels, bits)?),
        (0..n as u64).collect(),
    )
}
