//! Stochastic view generation.
//!
//! Image layers get feature-space proxies of pixel augmentations:
//!
//! | pixel op | proxy on a feature vector `x ∈ R^d`                             |
//! |----------|------------------------------------------------------------------|
//! | crop     | zero a contiguous (wrapping) span of `round(fraction · d)` coords |
//! | flip     | multiply by a fixed ±1 pattern owned by the layer                 |
//! | color    | `x_i (1 + a_i) + b_i` with `a_i, b_i ~ N(0, noise_scale²)`        |
//! | blur     | `[1, 2, 1] / 4` smoothing with reflected edges                    |
//! | rotate   | Givens rotation by one random angle on pairs `(2i, 2i + 1)`       |
//! | dropout  | inverted dropout                                                  |
//!
//! Text layers mask each coordinate to 0 with probability `p_mask`; raw
//! token sequences are masked with [`mask_tokens`].

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{ContrastiveConfig, ImageAugConfig, ModalityKind, TextAugConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{rng_for, splitmix64, stream};

/// Fixed sign pattern of the flip proxy for one layer.
pub fn flip_pattern(modality: usize, layer: usize, dim: usize) -> Vec<f64> {
    let mut state = splitmix64(0xF11F ^ ((modality as u64) << 32) ^ layer as u64);
    (0..dim)
        .map(|_| {
            state = splitmix64(state);
            if state >> 63 == 0 { 1.0 } else { -1.0 }
        })
        .collect()
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn blur(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    if d < 2 {
        return x.to_vec();
    }
    (0..d)
        .map(|i| {
            let left = if i == 0 { x[1] } else { x[i - 1] };
            let right = if i + 1 == d { x[d - 2] } else { x[i + 1] };
            (left + 2.0 * x[i] + right) / 4.0
        })
        .collect()
}

/// Augments one image-layer feature vector.
pub fn augment_image_layer<R: Rng + ?Sized>(
    x: &[f64],
    modality: usize,
    layer: usize,
    cfg: &ImageAugConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Empty("image feature vector".into()));
    }
    let d = x.len();
    let mut v = x.to_vec();
    if rng.random_bool(cfg.crop_prob) {
        let span = (cfg.crop_fraction * d as f64).round() as usize;
        let start = rng.random_range(0..d);
        for k in 0..span.min(d) {
            v[(start + k) % d] = 0.0;
        }
    }
    if rng.random_bool(cfg.flip_prob) {
        for (a, s) in v.iter_mut().zip(flip_pattern(modality, layer, d)) {
            *a *= s;
        }
    }
    if rng.random_bool(cfg.color_prob) {
        for a in v.iter_mut() {
            let gain = 1.0 + cfg.noise_scale * normal(rng);
            let offset = cfg.noise_scale * normal(rng);
            *a = *a * gain + offset;
        }
    }
    if rng.random_bool(cfg.blur_prob) {
        v = blur(&v);
    }
    if rng.random_bool(cfg.rotate_prob) {
        let theta = if cfg.rotate_max_angle > 0.0 {
            rng.random_range(-cfg.rotate_max_angle..=cfg.rotate_max_angle)
        } else {
            0.0
        };
        let (s, c) = theta.sin_cos();
        for i in (0..d - d % 2).step_by(2) {
            let (a, b) = (v[i], v[i + 1]);
            v[i] = c * a - s * b;
            v[i + 1] = s * a + c * b;
        }
    }
    if cfg.dropout_rate > 0.0 {
        let keep = 1.0 - cfg.dropout_rate;
        for a in v.iter_mut() {
            *a = if rng.random_bool(cfg.dropout_rate) { 0.0 } else { *a / keep };
        }
    }
    Ok(v)
}

fn check_p_mask(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("p_mask = {p} outside [0, 1)")))
    }
}

/// Masks each coordinate of a text-layer feature vector to 0.
pub fn augment_text_layer<R: Rng + ?Sized>(x: &[f64], cfg: &TextAugConfig, rng: &mut R) -> Result<Vec<f64>> {
    check_p_mask(cfg.p_mask)?;
    if x.is_empty() {
        return Err(Error::Empty("text feature vector".into()));
    }
    Ok(x.iter()
        .map(|&a| if rng.random_bool(cfg.p_mask) { 0.0 } else { a })
        .collect())
}

/// Replaces each token by `cfg.mask_token` with probability `p_mask`.
pub fn mask_tokens<R: Rng + ?Sized>(tokens: &[u32], cfg: &TextAugConfig, rng: &mut R) -> Result<Vec<u32>> {
    check_p_mask(cfg.p_mask)?;
    if let Some(&t) = tokens.iter().find(|&&t| t >= cfg.vocab_size) {
        return Err(Error::Config(format!("token id {t} outside vocabulary of {}", cfg.vocab_size)));
    }
    Ok(tokens
        .iter()
        .map(|&t| if rng.random_bool(cfg.p_mask) { cfg.mask_token } else { t })
        .collect())
}

/// Augments all layers of one modality of one sample.
pub fn augment<R: Rng + ?Sized>(
    layers: &[&[f64]],
    modality: usize,
    cfg: &ContrastiveConfig,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if layers.is_empty() {
        return Err(Error::Empty(format!("modality {modality} has no layers")));
    }
    match cfg.kind(modality)? {
        ModalityKind::Image => layers
            .iter()
            .enumerate()
            .map(|(l, x)| augment_image_layer(x, modality, l, &cfg.image, rng))
            .collect(),
        ModalityKind::Text => layers
            .iter()
            .map(|x| augment_text_layer(x, &cfg.text, rng))
            .collect(),
    }
}

/// Two independently augmented copies of one sample, `[modality][layer]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedViewPair {
    pub sample_id: u64,
    pub view_i: Vec<Vec<Vec<f64>>>,
    pub view_j: Vec<Vec<Vec<f64>>>,
}

/// Views of sample `index`. Each view draws from its own stream keyed by
/// `(seed, context, sample id, view)`, so the result does not depend on
/// batch composition or evaluation order.
pub fn augment_pair(
    dataset: &Dataset,
    index: usize,
    cfg: &ContrastiveConfig,
    seed: u64,
    context: &[u64],
) -> Result<AugmentedViewPair> {
    let id = dataset.ids()[index];
    let view = |v: u64| -> Result<Vec<Vec<Vec<f64>>>> {
        let mut tags = vec![stream::AUGMENT];
        tags.extend_from_slice(context);
        tags.extend_from_slice(&[id, v]);
        let mut rng = rng_for(seed, &tags);
        (0..dataset.num_modalities())
            .map(|m| augment(&dataset.modality_rows(m, index), m, cfg, &mut rng))
            .collect()
    };
    Ok(AugmentedViewPair {
        sample_id: id,
        view_i: view(0)?,
        view_j: view(1)?,
    })
}
