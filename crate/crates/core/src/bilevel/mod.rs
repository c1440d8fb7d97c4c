//! Alternating first-order architecture search.
//!
//! Each epoch runs a train phase that updates operator weights with
//! momentum SGD while the architecture logits sit on the tape as
//! constants, then a valid phase that updates the logits with Adam while
//! the weights are constants. There is no unrolled inner step. After each
//! epoch the mean validation contrastive loss under fixed views decides
//! whether the logits are checkpointed.

mod config;
mod search;

pub use config::SearchConfig;
pub(crate) use config::check_sgd;
pub use search::{
    run_search, run_search_from, search_epoch, EpochMetrics, SearchOutcome, SearchState, ENCODER_PREFIX,
    HEAD_PREFIX,
};
