//! The five primitive operators of an inner step node. Each maps two
//! `batch × d` inputs to one `batch × d` output:
//!
//! | operator             | definition                                         |
//! |----------------------|----------------------------------------------------|
//! | `Sum`                | `x + y`                                            |
//! | `ScaledDotAttention` | per-row attention of `xWq` over `yWk`, values `yWv`, scale `1/√d` |
//! | `LinearGLU`          | `([x,y] W1) ∘ σ([x,y] W2)`                         |
//! | `ConcatFC`           | `relu([x,y] W + b)`                                |
//! | `Zero`               | `0`                                                |
//!
//! In `ScaledDotAttention` every coordinate of a row acts as a token, so
//! samples in a batch never attend to each other.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, Linear, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PrimitiveOp {
    Sum,
    ScaledDotAttention,
    LinearGLU,
    ConcatFC,
    Zero,
}

impl PrimitiveOp {
    /// Canonical order; also the order of gamma logits.
    pub const ALL: [PrimitiveOp; 5] = [
        PrimitiveOp::Sum,
        PrimitiveOp::ScaledDotAttention,
        PrimitiveOp::LinearGLU,
        PrimitiveOp::ConcatFC,
        PrimitiveOp::Zero,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&p| p == self).expect("listed")
    }

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveOp::Sum => "Sum",
            PrimitiveOp::ScaledDotAttention => "ScaledDotAttention",
            PrimitiveOp::LinearGLU => "LinearGLU",
            PrimitiveOp::ConcatFC => "ConcatFC",
            PrimitiveOp::Zero => "Zero",
        }
    }
}

impl fmt::Display for PrimitiveOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrimitiveOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Genotype(format!("unknown primitive {s:?}")))
    }
}

/// A primitive together with its learnable weights.
#[derive(Clone, Debug)]
pub struct Primitive {
    pub op: PrimitiveOp,
    layers: Vec<Linear>,
    hidden_dim: usize,
}

impl Primitive {
    /// Registers the weights of `op` under `prefix` (e.g. `cell.0.step.1.LinearGLU`).
    pub fn new<R: Rng + ?Sized>(
        op: PrimitiveOp,
        store: &mut ParamStore,
        prefix: &str,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = hidden_dim;
        let layers = match op {
            PrimitiveOp::Sum | PrimitiveOp::Zero => vec![],
            PrimitiveOp::ScaledDotAttention => vec![
                Linear::new(store, &format!("{prefix}.q"), d, d, false, rng)?,
                Linear::new(store, &format!("{prefix}.k"), d, d, false, rng)?,
                Linear::new(store, &format!("{prefix}.v"), d, d, false, rng)?,
            ],
            PrimitiveOp::LinearGLU => vec![
                Linear::new(store, &format!("{prefix}.w1"), 2 * d, d, false, rng)?,
                Linear::new(store, &format!("{prefix}.w2"), 2 * d, d, false, rng)?,
            ],
            PrimitiveOp::ConcatFC => vec![Linear::new(store, &format!("{prefix}.fc"), 2 * d, d, true, rng)?],
        };
        Ok(Primitive {
            op,
            layers,
            hidden_dim,
        })
    }

    pub fn forward<'t>(&self, params: &Bound<'t>, x: Var<'t>, y: Var<'t>) -> Result<Var<'t>> {
        if x.shape() != y.shape() || x.shape().len() != 2 || x.shape()[1] != self.hidden_dim {
            return Err(Error::shape(
                "primitive",
                format!("{}: inputs {:?} and {:?}", self.op, x.shape(), y.shape()),
            ));
        }
        let tape = x.tape();
        match self.op {
            PrimitiveOp::Sum => x.add(y),
            PrimitiveOp::Zero => Ok(tape.constant(Tensor::zeros(&x.shape()))),
            PrimitiveOp::ScaledDotAttention => {
                let q = self.layers[0].forward(params, x)?;
                let k = self.layers[1].forward(params, y)?;
                let v = self.layers[2].forward(params, y)?;
                q.row_attention(k, v, 1.0 / (self.hidden_dim as f64).sqrt())
            }
            PrimitiveOp::LinearGLU => {
                let xy = tape.concat(&[x, y], 1)?;
                let value = self.layers[0].forward(params, xy)?;
                let gate = self.layers[1].forward(params, xy)?.sigmoid()?;
                value.mul(gate)
            }
            PrimitiveOp::ConcatFC => {
                let xy = tape.concat(&[x, y], 1)?;
                self.layers[0].forward(params, xy)?.relu()
            }
        }
    }
}
