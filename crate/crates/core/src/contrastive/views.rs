use super::augment::augment_pair;
use super::config::ContrastiveConfig;
use crate::autodiff::Tensor;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Augmented views of the selected samples, stacked into `[modality][layer]`
/// tensors of `2 · indices.len()` rows laid out as `(a1, b1, a2, b2, …)`.
pub fn build_views(
    dataset: &Dataset,
    indices: &[usize],
    cfg: &ContrastiveConfig,
    seed: u64,
    context: &[u64],
    exec: Exec,
) -> Result<Vec<Vec<Tensor>>> {
    if indices.is_empty() {
        return Err(Error::Empty("a contrastive batch needs at least one sample".into()));
    }
    let pairs = exec
        .map(indices, |&i| augment_pair(dataset, i, cfg, seed, context))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let rows = 2 * indices.len();
    let mut out = Vec::with_capacity(dataset.num_modalities());
    for (m, dims) in dataset.layout().iter().enumerate() {
        let mut layers = Vec::with_capacity(dims.len());
        for (l, &d) in dims.iter().enumerate() {
            let mut data = Vec::with_capacity(rows * d);
            for p in &pairs {
                data.extend_from_slice(&p.view_i[m][l]);
                data.extend_from_slice(&p.view_j[m][l]);
            }
            layers.push(Tensor::new(vec![rows, d], data)?);
        }
        out.push(layers);
    }
    Ok(out)
}
