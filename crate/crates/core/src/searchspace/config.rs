use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Shape of the fusion search space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpaceConfig {
    /// Backbone feature widths, indexed `[modality][layer]`.
    pub features_per_modality: Vec<Vec<usize>>,
    pub num_cells: usize,
    pub steps_per_cell: usize,
    pub hidden_dim: usize,
}

impl Default for SearchSpaceConfig {
    /// Matches the default synthetic dataset layout.
    fn default() -> Self {
        SearchSpaceConfig {
            features_per_modality: vec![vec![32, 32], vec![32, 32]],
            num_cells: 2,
            steps_per_cell: 2,
            hidden_dim: 16,
        }
    }
}

impl SearchSpaceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("search space: {m}")));
        if self.features_per_modality.is_empty() {
            return bad("no modalities");
        }
        if self.features_per_modality.iter().any(|m| m.is_empty()) {
            return bad("modality without layers");
        }
        if self.features_per_modality.iter().flatten().any(|&d| d == 0) {
            return bad("zero feature dimension");
        }
        if self.num_features() < 2 {
            return bad("at least two backbone features are needed to form a cell input pair");
        }
        if self.num_cells == 0 || self.steps_per_cell == 0 || self.hidden_dim == 0 {
            return bad("num_cells, steps_per_cell and hidden_dim must be at least 1");
        }
        Ok(())
    }

    pub fn num_modalities(&self) -> usize {
        self.features_per_modality.len()
    }

    pub fn num_features(&self) -> usize {
        self.features_per_modality.iter().map(Vec::len).sum()
    }

    /// Backbone feature sources in modality-major order.
    pub fn feature_sources(&self) -> Vec<Source> {
        self.features_per_modality
            .iter()
            .enumerate()
            .flat_map(|(m, layers)| (0..layers.len()).map(move |l| Source::Feature { modality: m, layer: l }))
            .collect()
    }

    /// Candidate inputs of cell `c`: every backbone feature, then cells `0..c`.
    pub fn cell_candidates(&self, cell: usize) -> Vec<Source> {
        let mut out = self.feature_sources();
        out.extend((0..cell).map(Source::Cell));
        out
    }

    /// Width of the encoder representation: every cell output, concatenated.
    pub fn output_dim(&self) -> usize {
        self.num_cells * self.hidden_dim
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_value(self).expect("config serializes");
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        hex::encode(digest)
    }
}

/// Number of step candidates for step `s`: the two cell inputs plus every
/// earlier step of the same cell.
pub fn step_candidate_count(step: usize) -> usize {
    step + 2
}

/// Unordered pairs `(i, j)` with `i < j < n`, in lexicographic order.
pub fn ordered_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

/// A value that can feed a cell or a step.
///
/// Text form: `"<modality>:<layer>"` for backbone features, `"cell:<k>"`
/// and `"step:<k>"` for earlier cells and steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Feature { modality: usize, layer: usize },
    Cell(usize),
    Step(usize),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Feature { modality, layer } => write!(f, "{modality}:{layer}"),
            Source::Cell(k) => write!(f, "cell:{k}"),
            Source::Step(k) => write!(f, "step:{k}"),
        }
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = || Error::Genotype(format!("malformed source {s:?}"));
        let (head, tail) = s.split_once(':').ok_or_else(err)?;
        let k: usize = tail.parse().map_err(|_| err())?;
        match head {
            "cell" => Ok(Source::Cell(k)),
            "step" => Ok(Source::Step(k)),
            m => Ok(Source::Feature {
                modality: m.parse().map_err(|_| err())?,
                layer: k,
            }),
        }
    }
}

impl Serialize for Source {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Source {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
