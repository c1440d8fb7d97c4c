use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a modality is augmented.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalityKind {
    Image,
    Text,
}

/// Feature-space stand-ins for pixel augmentations. Each operation fires
/// independently with its probability, in the order crop, flip, color,
/// blur, rotate, dropout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageAugConfig {
    pub crop_prob: f64,
    /// Fraction of coordinates zeroed by the crop proxy.
    pub crop_fraction: f64,
    pub flip_prob: f64,
    pub color_prob: f64,
    /// Std of the per-coordinate gain and offset of the color proxy.
    pub noise_scale: f64,
    pub blur_prob: f64,
    pub rotate_prob: f64,
    /// Rotation angles are drawn from `[-max, max]` radians.
    pub rotate_max_angle: f64,
    pub dropout_rate: f64,
}

impl Default for ImageAugConfig {
    fn default() -> Self {
        ImageAugConfig {
            crop_prob: 0.5,
            crop_fraction: 0.4,
            flip_prob: 0.5,
            color_prob: 0.8,
            noise_scale: 0.05,
            blur_prob: 0.5,
            rotate_prob: 0.5,
            rotate_max_angle: std::f64::consts::FRAC_PI_6,
            dropout_rate: 0.1,
        }
    }
}

impl ImageAugConfig {
    /// All operations disabled: views equal the input.
    pub fn identity() -> Self {
        ImageAugConfig {
            crop_prob: 0.0,
            flip_prob: 0.0,
            color_prob: 0.0,
            blur_prob: 0.0,
            rotate_prob: 0.0,
            dropout_rate: 0.0,
            ..ImageAugConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextAugConfig {
    /// Probability of masking each token, or each feature coordinate of an
    /// ingested text layer.
    pub p_mask: f64,
    pub mask_token: u32,
    pub vocab_size: u32,
}

impl Default for TextAugConfig {
    fn default() -> Self {
        TextAugConfig {
            p_mask: 0.5,
            mask_token: 0,
            vocab_size: 30_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub projection_hidden: usize,
    pub projection_dim: usize,
    /// One entry per modality.
    pub modality_kinds: Vec<ModalityKind>,
    pub image: ImageAugConfig,
    pub text: TextAugConfig,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            temperature: 0.1,
            projection_hidden: 64,
            projection_dim: 64,
            modality_kinds: vec![ModalityKind::Image, ModalityKind::Text],
            image: ImageAugConfig::default(),
            text: TextAugConfig::default(),
        }
    }
}

fn probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {p} is not a probability")))
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if self.projection_hidden == 0 || self.projection_dim == 0 {
            return Err(Error::Config("projection dims must be positive".into()));
        }
        let im = &self.image;
        for (name, p) in [
            ("crop_prob", im.crop_prob),
            ("crop_fraction", im.crop_fraction),
            ("flip_prob", im.flip_prob),
            ("color_prob", im.color_prob),
            ("blur_prob", im.blur_prob),
            ("rotate_prob", im.rotate_prob),
            ("dropout_rate", im.dropout_rate),
        ] {
            probability(name, p)?;
        }
        if im.dropout_rate >= 1.0 {
            return Err(Error::Config("dropout_rate must be below 1".into()));
        }
        if !(im.noise_scale >= 0.0 && im.noise_scale.is_finite()) {
            return Err(Error::Config("noise_scale must be non-negative".into()));
        }
        if !(im.rotate_max_angle >= 0.0 && im.rotate_max_angle.is_finite()) {
            return Err(Error::Config("rotate_max_angle must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.text.p_mask) {
            return Err(Error::Config(format!("p_mask = {} outside [0, 1)", self.text.p_mask)));
        }
        if self.text.mask_token >= self.text.vocab_size {
            return Err(Error::Config("mask token must be inside the vocabulary".into()));
        }
        Ok(())
    }

    pub fn kind(&self, modality: usize) -> Result<ModalityKind> {
        self.modality_kinds
            .get(modality)
            .copied()
            .ok_or_else(|| Error::Config(format!("no augmentation kind for modality {modality}")))
    }
}
