//! Named parameter storage and the dense layer shared by every model.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::autodiff::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered table of named tensors. Insertion order defines [`ParamId`]s.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Checkpoint(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id_of(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_values(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Overwrites every parameter of `self` that `other` holds under the
    /// same name and shape. Returns how many were copied.
    pub fn copy_matching(&mut self, other: &ParamStore) -> usize {
        let mut copied = 0;
        for (i, name) in self.names.iter().enumerate() {
            if let Some(src) = other.by_name(name) {
                if src.shape() == self.values[i].shape() {
                    self.values[i] = src.clone();
                    copied += 1;
                }
            }
        }
        copied
    }

    /// Replaces values from `other`, requiring an exact name and shape
    /// match for every parameter of `self`.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            let src = other
                .by_name(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            if src.shape() != self.values[i].shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: expected shape {:?}, found {:?}",
                    self.values[i].shape(),
                    src.shape()
                )));
            }
            self.values[i] = src.clone();
        }
        Ok(())
    }

    /// Parameters whose name starts with `prefix`, as a new store.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        let mut out = ParamStore::new();
        for (name, value) in self.iter() {
            if name.starts_with(prefix) {
                out.add(name, value.clone()).expect("names are unique");
            }
        }
        out
    }

    /// Merges `other` into `self`; names must not collide.
    pub fn extend(&mut self, other: &ParamStore) -> Result<()> {
        for (name, value) in other.iter() {
            self.add(name, value.clone())?;
        }
        Ok(())
    }

    /// Places every parameter on `tape`, as trainable leaves or constants.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> Bound<'t> {
        let vars = self
            .values
            .iter()
            .map(|v| {
                if trainable {
                    tape.param(v.clone())
                } else {
                    tape.constant(v.clone())
                }
            })
            .collect();
        Bound { vars }
    }
}

/// Parameters of one store placed on a tape.
pub struct Bound<'t> {
    vars: Vec<Var<'t>>,
}

impl<'t> Bound<'t> {
    /// Wraps vars already on a tape, one per parameter in store order.
    pub fn from_vars(vars: Vec<Var<'t>>) -> Self {
        Bound { vars }
    }

    pub fn var(&self, id: ParamId) -> Var<'t> {
        self.vars[id.0]
    }

    /// Gradients aligned with the store's parameter order.
    pub fn gradients(&self, grads: &mut Gradients) -> Vec<Tensor> {
        self.vars.iter().map(|&v| grads.take(v)).collect()
    }
}

/// Glorot-uniform initialisation for a `fan_in × fan_out` matrix.
pub fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
    Tensor::from_parts(vec![fan_in, fan_out], data)
}

/// `y = x W + b` with `W: in × out` and `b: 1 × out`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add(format!("{name}.w"), glorot(rng, in_dim, out_dim))?;
        let bias = if bias {
            Some(store.add(format!("{name}.b"), Tensor::zeros(&[1, out_dim]))?)
        } else {
            None
        };
        Ok(Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward<'t>(&self, params: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let y = x.matmul(params.var(self.weight))?;
        match self.bias {
            Some(b) => y.add(params.var(b)),
            None => Ok(y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn store_names_and_copying() {
        let mut rng = rng_for(1, &[]);
        let mut a = ParamStore::new();
        let lin = Linear::new(&mut a, "l", 3, 2, true, &mut rng).unwrap();
        assert!(a.add("l.w", Tensor::zeros(&[1])).is_err());
        assert_eq!(a.name(lin.weight), "l.w");
        assert_eq!(a.num_values(), 8);

        let mut b = ParamStore::new();
        Linear::new(&mut b, "l", 3, 2, true, &mut rng).unwrap();
        b.add("other", Tensor::zeros(&[1])).unwrap();
        assert_eq!(b.copy_matching(&a), 2);
        assert_eq!(b.by_name("l.w"), a.by_name("l.w"));
        assert!(a.load_from(&b).is_ok());
        assert!(b.load_from(&a).is_err());
        assert_eq!(b.subset("l.").len(), 2);
    }

    #[test]
    fn linear_forward_with_bias() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap()).unwrap();
        let b = store.add("b", Tensor::matrix(1, 1, vec![0.5]).unwrap()).unwrap();
        let lin = Linear {
            weight: w,
            bias: Some(b),
            in_dim: 2,
            out_dim: 1,
        };
        let tape = Tape::new();
        let bound = store.bind(&tape, true);
        let x = tape.constant(Tensor::matrix(2, 2, vec![1.0, 1.0, 0.0, 2.0]).unwrap());
        let y = lin.forward(&bound, x).unwrap();
        assert_eq!(y.value().data(), &[3.5, 4.5]);
    }
}
