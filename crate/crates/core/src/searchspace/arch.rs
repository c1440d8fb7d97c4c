use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{ordered_pairs, step_candidate_count, SearchSpaceConfig};
use super::primitives::PrimitiveOp;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore};

/// Continuous architecture logits, each stored as a `1 × n` row.
///
/// * `alpha[c]`: one logit per candidate input of cell `c`. A pair of
///   candidates `(i, j)` is scored `alpha_i + alpha_j`.
/// * `beta[c][s]`: one logit per candidate input pair of step `s`.
/// * `gamma[c][s]`: one logit per primitive operator.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchParams {
    store: ParamStore,
    alpha: Vec<ParamId>,
    beta: Vec<Vec<ParamId>>,
    gamma: Vec<Vec<ParamId>>,
}

impl ArchParams {
    pub fn zeros(config: &SearchSpaceConfig) -> Result<Self> {
        Self::build(config, |n| Tensor::zeros(&[1, n]))
    }

    /// Small Gaussian logits, `scale · N(0, 1)`.
    pub fn random<R: Rng + ?Sized>(config: &SearchSpaceConfig, scale: f64, rng: &mut R) -> Result<Self> {
        Self::build(config, |n| {
            let data = (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut *rng);
                    scale * z
                })
                .collect();
            Tensor::from_parts(vec![1, n], data)
        })
    }

    fn build(config: &SearchSpaceConfig, mut init: impl FnMut(usize) -> Tensor) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        let mut gamma = Vec::new();
        for c in 0..config.num_cells {
            let k = config.cell_candidates(c).len();
            alpha.push(store.add(format!("alpha.{c}"), init(k))?);
            let mut b = Vec::new();
            let mut g = Vec::new();
            for s in 0..config.steps_per_cell {
                let pairs = ordered_pairs(step_candidate_count(s)).len();
                b.push(store.add(format!("beta.{c}.{s}"), init(pairs))?);
                g.push(store.add(format!("gamma.{c}.{s}"), init(PrimitiveOp::ALL.len()))?);
            }
            beta.push(b);
            gamma.push(g);
        }
        Ok(ArchParams {
            store,
            alpha,
            beta,
            gamma,
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn num_cells(&self) -> usize {
        self.alpha.len()
    }

    pub fn steps_per_cell(&self) -> usize {
        self.beta.first().map(Vec::len).unwrap_or(0)
    }

    pub fn alpha_id(&self, cell: usize) -> ParamId {
        self.alpha[cell]
    }

    pub fn beta_id(&self, cell: usize, step: usize) -> ParamId {
        self.beta[cell][step]
    }

    pub fn gamma_id(&self, cell: usize, step: usize) -> ParamId {
        self.gamma[cell][step]
    }

    pub fn alpha(&self, cell: usize) -> &[f64] {
        self.store.get(self.alpha[cell]).data()
    }

    pub fn beta(&self, cell: usize, step: usize) -> &[f64] {
        self.store.get(self.beta[cell][step]).data()
    }

    pub fn gamma(&self, cell: usize, step: usize) -> &[f64] {
        self.store.get(self.gamma[cell][step]).data()
    }

    pub fn set_alpha(&mut self, cell: usize, logits: &[f64]) -> Result<()> {
        let id = self.alpha[cell];
        self.set(id, logits)
    }

    pub fn set_beta(&mut self, cell: usize, step: usize, logits: &[f64]) -> Result<()> {
        let id = self.beta[cell][step];
        self.set(id, logits)
    }

    pub fn set_gamma(&mut self, cell: usize, step: usize, logits: &[f64]) -> Result<()> {
        let id = self.gamma[cell][step];
        self.set(id, logits)
    }

    fn set(&mut self, id: ParamId, logits: &[f64]) -> Result<()> {
        let t = self.store.get_mut(id);
        if t.numel() != logits.len() {
            return Err(Error::shape(
                "arch",
                format!("expected {} logits, got {}", t.numel(), logits.len()),
            ));
        }
        *t = Tensor::new(vec![1, logits.len()], logits.to_vec())?;
        Ok(())
    }

    /// Checks logit counts against `config`.
    pub fn is_consistent_with(&self, config: &SearchSpaceConfig) -> bool {
        self.num_cells() == config.num_cells
            && self.steps_per_cell() == config.steps_per_cell
            && (0..config.num_cells).all(|c| {
                self.alpha(c).len() == config.cell_candidates(c).len()
                    && (0..config.steps_per_cell).all(|s| {
                        self.beta(c, s).len() == ordered_pairs(step_candidate_count(s)).len()
                            && self.gamma(c, s).len() == PrimitiveOp::ALL.len()
                    })
            })
    }
}

/// Plain softmax of a logit slice (max-shifted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
