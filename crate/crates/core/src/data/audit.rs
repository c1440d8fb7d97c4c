//! Cross-modal correlation audit for feature datasets.
//!
//! For every pair of layers from different modalities, both blocks are
//! centred, reduced to their top `rank` principal components, and the
//! largest canonical correlation between the reduced blocks is reported.
//! A layer pair sharing a latent of dimension `rank` scores near 1;
//! independent noise scores near 0.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::synthetic::{generate, SyntheticSpec};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::searchspace::Source;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub a: Source,
    pub b: Source,
    pub correlation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rank: usize,
    pub pairs: Vec<PairCorrelation>,
}

impl AuditReport {
    /// Correlation of the pair `{a, b}`, in either order.
    pub fn get(&self, a: Source, b: Source) -> Option<f64> {
        self.pairs
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
            .map(|p| p.correlation)
    }

    /// Smallest planted-pair score and largest score among the rest.
    pub fn planted_vs_rest(&self, planted: &[Source]) -> (f64, f64) {
        let mut low = f64::INFINITY;
        let mut high: f64 = 0.0;
        for p in &self.pairs {
            if planted.contains(&p.a) && planted.contains(&p.b) {
                low = low.min(p.correlation);
            } else {
                high = high.max(p.correlation);
            }
        }
        (low, high)
    }
}

fn block_matrix(dataset: &Dataset, m: usize, l: usize) -> DMatrix<f64> {
    let d = dataset.layout()[m][l];
    let mut x = DMatrix::from_row_slice(dataset.len(), d, dataset.block(m, l));
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    x
}

/// Orthonormal basis (n × r) for the top-`rank` principal subspace.
fn principal_basis(x: DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let svd = x.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let r = rank.min(order.len());
    let cols: Vec<_> = order[..r].iter().map(|&i| u.column(i).into_owned()).collect();
    DMatrix::from_columns(&cols)
}

fn top_canonical_correlation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let cross = a.transpose() * b;
    cross
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .min(1.0)
}

pub fn audit(dataset: &Dataset, rank: usize) -> Result<AuditReport> {
    if rank == 0 {
        return Err(Error::Config("audit rank must be positive".into()));
    }
    if dataset.len() <= rank {
        return Err(Error::TooSmall(format!("{} samples for rank {rank}", dataset.len())));
    }
    let mut bases = Vec::new();
    for (m, dims) in dataset.layout().iter().enumerate() {
        for l in 0..dims.len() {
            let src = Source::Feature { modality: m, layer: l };
            bases.push((src, principal_basis(block_matrix(dataset, m, l), rank)));
        }
    }
    let mut pairs = Vec::new();
    for (i, (sa, ba)) in bases.iter().enumerate() {
        for (sb, bb) in &bases[i + 1..] {
            let (Source::Feature { modality: ma, .. }, Source::Feature { modality: mb, .. }) = (sa, sb) else {
                unreachable!("feature sources")
            };
            if ma != mb {
                pairs.push(PairCorrelation {
                    a: *sa,
                    b: *sb,
                    correlation: top_canonical_correlation(ba, bb),
                });
            }
        }
    }
    Ok(AuditReport { rank, pairs })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub trials: usize,
    pub dominated: usize,
    pub fraction: f64,
    /// Smallest ratio of planted to best non-planted correlation.
    pub min_ratio: f64,
}

/// Regenerates `spec` under seeds `base_seed..base_seed + trials` and counts
/// how often every planted pair beats every non-planted pair.
pub fn dominance(spec: &SyntheticSpec, trials: usize, base_seed: u64, exec: Exec) -> Result<DominanceReport> {
    if trials == 0 {
        return Err(Error::Config("dominance needs at least one trial".into()));
    }
    let results = exec.map_range(trials, |t| -> Result<(bool, f64)> {
        let trial = SyntheticSpec {
            seed: base_seed + t as u64,
            ..spec.clone()
        };
        let report = audit(&generate(&trial)?, spec.latent_dim)?;
        let (low, high) = report.planted_vs_rest(&spec.planted);
        Ok((low > high, low / high.max(1e-300)))
    });
    let mut dominated = 0;
    let mut min_ratio = f64::INFINITY;
    for r in results {
        let (ok, ratio) = r?;
        dominated += usize::from(ok);
        min_ratio = min_ratio.min(ratio);
    }
    Ok(DominanceReport {
        trials,
        dominated,
        fraction: dominated as f64 / trials as f64,
        min_ratio,
    })
}
