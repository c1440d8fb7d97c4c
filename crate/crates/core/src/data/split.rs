use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

/// Guards `floor(x · r)` against representation error such as
/// `100 × 0.29 = 28.999…`.
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Fraction of the whole dataset held out as the labeled test split.
    pub test_fraction: f64,
    /// Fraction of the unlabeled pool used for architecture updates.
    pub valid_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.1,
            valid_fraction: 0.2,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config("test_fraction must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.valid_fraction) {
            return Err(Error::Config("valid_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Sizes of each split for a dataset of `n` samples at labeled ratio `r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub test: usize,
    pub labeled: usize,
    pub search_train: usize,
    pub search_valid: usize,
}

fn floor_frac(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction) + FLOOR_SLACK).floor() as usize
}

pub fn split_sizes(n: usize, r: f64, config: &SplitConfig) -> Result<SplitSizes> {
    config.validate()?;
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Config(format!("labeled ratio {r} outside (0, 1]")));
    }
    let test = floor_frac(n, config.test_fraction);
    let pool = n - test;
    let labeled = floor_frac(pool, r).min(pool);
    let unlabeled = pool - labeled;
    let search_valid = floor_frac(unlabeled, config.valid_fraction);
    Ok(SplitSizes {
        test,
        labeled,
        search_train: unlabeled - search_valid,
        search_valid,
    })
}

/// Disjoint splits of one dataset. The two search splits never carry labels.
#[derive(Clone, Debug)]
pub struct Splits {
    pub search_train: Dataset,
    pub search_valid: Dataset,
    pub labeled_train: Dataset,
    pub test: Dataset,
}

/// Shuffles once under `seed`, then carves test, labeled, search-train and
/// search-valid in that order. The test split depends only on `seed`, so
/// it is shared by every `r`.
pub fn split(dataset: &Dataset, r: f64, seed: u64, config: &SplitConfig) -> Result<Splits> {
    if dataset.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    if dataset.labels().is_none() {
        return Err(Error::MissingInput("splitting requires a labeled dataset".into()));
    }
    let sizes = split_sizes(dataset.len(), r, config)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng_for(seed, &[stream::SPLIT]));
    let (test, rest) = order.split_at(sizes.test);
    let (labeled, rest) = rest.split_at(sizes.labeled);
    let (train, valid) = rest.split_at(sizes.search_train);
    Ok(Splits {
        search_train: dataset.subset(train, false),
        search_valid: dataset.subset(valid, false),
        labeled_train: dataset.subset(labeled, true),
        test: dataset.subset(test, true),
    })
}
