//! Minibatch bookkeeping shared by the training stages.

use rand::seq::SliceRandom;

use crate::autodiff::{Tape, Tensor, Var};
use crate::rng::{rng_for, stream};

/// Shuffled minibatches over `0..n`. A trailing batch with fewer than two
/// samples is dropped, since it has no negatives.
pub fn minibatches(n: usize, batch_size: usize, seed: u64, tags: &[u64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut path = vec![stream::SHUFFLE];
    path.extend_from_slice(tags);
    order.shuffle(&mut rng_for(seed, &path));
    order
        .chunks(batch_size.max(1))
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Fixed, unshuffled chunks over `0..n` for evaluation passes.
pub fn eval_chunks(n: usize, chunk: usize) -> Vec<Vec<usize>> {
    let idx: Vec<usize> = (0..n).collect();
    idx.chunks(chunk.max(1)).map(<[usize]>::to_vec).collect()
}

/// Places `[modality][layer]` feature tensors on `tape` as constants.
pub fn feature_vars<'t>(tape: &'t Tape, features: &[Vec<Tensor>]) -> Vec<Vec<Var<'t>>> {
    features
        .iter()
        .map(|layers| layers.iter().map(|t| tape.constant(t.clone())).collect())
        .collect()
}
