//! The fusion-model search space.
//!
//! Backbone features are projected to a common hidden width and fed to a
//! chain of fusion cells. Each cell picks two inputs among the backbone
//! features and earlier cells, runs them through inner step nodes that
//! each pick an input pair and a primitive operator, and re-projects the
//! concatenated step outputs back to the hidden width.
//!
//! During search every choice is a softmax mixture ([`Supernet`]); after
//! search [`derive_genotype`] discretizes the logits and [`instantiate`]
//! builds the fixed network.

mod arch;
mod config;
mod fixed;
mod genotype;
mod mixed;
mod primitives;

pub use arch::{softmax, ArchParams};
pub use config::{ordered_pairs, step_candidate_count, SearchSpaceConfig, Source};
pub use fixed::{instantiate, FusionNetwork};
pub use genotype::{derive_genotype, CellGene, Genotype, StepGene};
pub use mixed::{mixed_cell_input, mixed_step, Supernet};
pub use primitives::{Primitive, PrimitiveOp};
