use rand::Rng;

use crate::autodiff::Var;
use crate::error::Result;
use crate::nn::{Bound, Linear, ParamStore};

/// Two-layer MLP `g(h) = relu(h W1 + b1) W2 + b2`. No normalization: the
/// loss takes cosine similarities itself.
#[derive(Clone, Debug)]
pub struct ProjectionHead {
    pub hidden: Linear,
    pub out: Linear,
}

impl ProjectionHead {
    /// Registers `{prefix}1` and `{prefix}2` in `store`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(ProjectionHead {
            hidden: Linear::new(store, &format!("{prefix}1"), in_dim, hidden_dim, true, rng)?,
            out: Linear::new(store, &format!("{prefix}2"), hidden_dim, out_dim, true, rng)?,
        })
    }

    pub fn forward<'t>(&self, params: &Bound<'t>, h: Var<'t>) -> Result<Var<'t>> {
        let a = self.hidden.forward(params, h)?.relu()?;
        self.out.forward(params, a)
    }
}
