//! Feature datasets: the in-memory type, a synthetic generator with planted
//! cross-modal structure, the `MMNF` file format, a correlation audit, and
//! deterministic splitting.

mod audit;
mod dataset;
pub mod mmnf;
mod split;
mod synthetic;

pub use audit::{audit, dominance, AuditReport, DominanceReport, PairCorrelation};
pub use dataset::{Dataset, Labels};
pub use split::{split, split_sizes, SplitConfig, SplitSizes, Splits};
pub use synthetic::{generate, SyntheticSpec};
