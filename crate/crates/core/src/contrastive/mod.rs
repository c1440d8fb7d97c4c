//! Contrastive learning pieces: two-view augmentation, the projection head,
//! and the NT-Xent loss.

mod augment;
mod config;
mod head;
mod loss;
mod views;

pub use augment::{
    augment, augment_image_layer, augment_pair, augment_text_layer, flip_pattern, mask_tokens,
    AugmentedViewPair,
};
pub use config::{ContrastiveConfig, ImageAugConfig, ModalityKind, TextAugConfig};
pub use head::ProjectionHead;
pub use loss::{ntxent_loss, partner};
pub use views::build_views;
