//! Self-supervised differentiable architecture search for multimodal
//! fusion networks.
//!
//! The crate covers the whole experiment loop: a tape-based autodiff
//! engine, the fusion-cell search space, NT-Xent contrastive training,
//! alternating first-order bilevel search, contrastive pretraining and
//! classifier fitting of the derived network, weighted-F1 evaluation, and
//! a synthetic multimodal benchmark with planted cross-modal structure.

pub mod autodiff;
mod batching;
pub mod bilevel;
pub mod cli;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod exec;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod searchspace;

pub use error::{Error, Result};
