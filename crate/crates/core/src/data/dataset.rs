use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::searchspace::SearchSpaceConfig;

/// Multilabel bit-matrix, `n × num_labels`, one byte (0 or 1) per entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labels {
    num_labels: usize,
    bits: Vec<u8>,
}

impl Labels {
    pub fn new(num_labels: usize, bits: Vec<u8>) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::Config("label dimension must be positive".into()));
        }
        if !bits.len().is_multiple_of(num_labels) {
            return Err(Error::shape("labels", format!("{} bits for {num_labels} labels", bits.len())));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Config("label entries must be 0 or 1".into()));
        }
        Ok(Labels { num_labels, bits })
    }

    pub fn from_rows(num_labels: usize, rows: &[Vec<u8>]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != num_labels) {
            return Err(Error::shape("labels", "row length differs from label count"));
        }
        Labels::new(num_labels, rows.concat())
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn len(&self) -> usize {
        self.bits.len() / self.num_labels
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.bits[i * self.num_labels..(i + 1) * self.num_labels]
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.bits.chunks(self.num_labels).map(<[u8]>::to_vec).collect()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    fn select(&self, indices: &[usize]) -> Labels {
        let bits = indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Labels {
            num_labels: self.num_labels,
            bits,
        }
    }
}

/// Precomputed backbone features for `n` samples.
///
/// `features[m][l]` is a row-major `n × layout[m][l]` block. Every sample
/// carries an id that survives subsetting; ids key augmentation streams and
/// make partition checks possible.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    layout: Vec<Vec<usize>>,
    features: Vec<Vec<Vec<f64>>>,
    labels: Option<Labels>,
    ids: Vec<u64>,
}

impl Dataset {
    pub fn new(
        layout: Vec<Vec<usize>>,
        features: Vec<Vec<Vec<f64>>>,
        labels: Option<Labels>,
        ids: Vec<u64>,
    ) -> Result<Self> {
        let n = ids.len();
        if layout.is_empty() || layout.iter().any(Vec::is_empty) {
            return Err(Error::Config("every modality needs at least one layer".into()));
        }
        if layout.iter().flatten().any(|&d| d == 0) {
            return Err(Error::Config("feature dimensions must be positive".into()));
        }
        if features.len() != layout.len() || features.iter().zip(&layout).any(|(f, l)| f.len() != l.len()) {
            return Err(Error::shape("dataset", "feature blocks do not match the layout"));
        }
        for (blocks, dims) in features.iter().zip(&layout) {
            for (block, &d) in blocks.iter().zip(dims) {
                if block.len() != n * d {
                    return Err(Error::shape("dataset", format!("block of {} values for {n} × {d}", block.len())));
                }
                if block.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { op: "dataset" });
                }
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::shape("dataset", format!("{} label rows for {n} samples", l.len())));
            }
        }
        Ok(Dataset {
            layout,
            features,
            labels,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn layout(&self) -> &[Vec<usize>] {
        &self.layout
    }

    pub fn num_modalities(&self) -> usize {
        self.layout.len()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// `None` for unlabeled splits.
    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn block(&self, modality: usize, layer: usize) -> &[f64] {
        &self.features[modality][layer]
    }

    pub fn row(&self, modality: usize, layer: usize, i: usize) -> &[f64] {
        let d = self.layout[modality][layer];
        &self.features[modality][layer][i * d..(i + 1) * d]
    }

    /// All layers of one modality for sample `i`.
    pub fn modality_rows(&self, modality: usize, i: usize) -> Vec<&[f64]> {
        (0..self.layout[modality].len())
            .map(|l| self.row(modality, l, i))
            .collect()
    }

    /// Stacks the selected samples into `[modality][layer]` tensors.
    pub fn gather(&self, indices: &[usize]) -> Result<Vec<Vec<Tensor>>> {
        if indices.is_empty() {
            return Err(Error::Empty("no samples selected".into()));
        }
        let mut out = Vec::with_capacity(self.layout.len());
        for (m, dims) in self.layout.iter().enumerate() {
            let mut layers = Vec::with_capacity(dims.len());
            for (l, &d) in dims.iter().enumerate() {
                let mut data = Vec::with_capacity(indices.len() * d);
                for &i in indices {
                    data.extend_from_slice(self.row(m, l, i));
                }
                layers.push(Tensor::from_parts(vec![indices.len(), d], data));
            }
            out.push(layers);
        }
        Ok(out)
    }

    /// Copies the selected samples; labels are dropped unless `keep_labels`.
    pub fn subset(&self, indices: &[usize], keep_labels: bool) -> Dataset {
        let features = self
            .features
            .iter()
            .zip(&self.layout)
            .map(|(blocks, dims)| {
                blocks
                    .iter()
                    .zip(dims)
                    .map(|(block, &d)| {
                        indices
                            .iter()
                            .flat_map(|&i| block[i * d..(i + 1) * d].iter().copied())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Dataset {
            layout: self.layout.clone(),
            features,
            labels: if keep_labels {
                self.labels.as_ref().map(|l| l.select(indices))
            } else {
                None
            },
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    /// Rows of `self` followed by rows of `other`. Labels survive only when
    /// both sides carry them.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.layout != other.layout {
            return Err(Error::shape("concat", "feature layouts differ"));
        }
        let features = self
            .features
            .iter()
            .zip(&other.features)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| [x.as_slice(), y.as_slice()].concat()).collect())
            .collect();
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) if a.num_labels != b.num_labels => {
                return Err(Error::shape("concat", "label dimensions differ"));
            }
            (Some(a), Some(b)) => Some(Labels::new(a.num_labels, [a.bits.as_slice(), b.bits.as_slice()].concat())?),
            _ => None,
        };
        let ids = [self.ids.as_slice(), other.ids.as_slice()].concat();
        Dataset::new(self.layout.clone(), features, labels, ids)
    }

    pub fn without_labels(&self) -> Dataset {
        Dataset {
            labels: None,
            ..self.clone()
        }
    }

    /// Errors unless the feature layout is exactly the one `config` expects.
    pub fn check_layout(&self, config: &SearchSpaceConfig) -> Result<()> {
        if self.layout != config.features_per_modality {
            return Err(Error::shape(
                "dataset",
                format!(
                    "feature layout {:?} does not match search space {:?}",
                    self.layout, config.features_per_modality
                ),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let labels = Labels::from_rows(2, &[vec![1, 0], vec![0, 1], vec![1, 1]]).unwrap();
        Dataset::new(
            vec![vec![2], vec![1]],
            vec![vec![vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]], vec![vec![7.0, 8.0, 9.0]]],
            Some(labels),
            vec![10, 11, 12],
        )
        .unwrap()
    }

    #[test]
    fn subset_keeps_rows_ids_and_optionally_labels() {
        let d = tiny();
        let s = d.subset(&[2, 0], true);
        assert_eq!(s.row(0, 0, 0), &[4.0, 5.0]);
        assert_eq!(s.row(1, 0, 1), &[7.0]);
        assert_eq!(s.ids(), &[12, 10]);
        assert_eq!(s.labels().unwrap().row(0), &[1, 1]);
        assert!(d.subset(&[1], false).labels().is_none());
    }

    #[test]
    fn gather_builds_batch_tensors() {
        let g = tiny().gather(&[1, 2]).unwrap();
        assert_eq!(g[0][0].shape(), &[2, 2]);
        assert_eq!(g[0][0].data(), &[2.0, 3.0, 4.0, 5.0]);
        assert!(tiny().gather(&[]).is_err());
    }

    #[test]
    fn rejects_inconsistent_blocks() {
        assert!(Dataset::new(vec![vec![2]], vec![vec![vec![0.0; 3]]], None, vec![0, 1]).is_err());
        assert!(Labels::new(2, vec![0, 2]).is_err());
    }
}
