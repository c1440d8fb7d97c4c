//! Softmax-relaxed fusion network used during search.

use rand::Rng;

use super::arch::ArchParams;
use super::config::{ordered_pairs, step_candidate_count, SearchSpaceConfig, Source};
use super::primitives::{Primitive, PrimitiveOp};
use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, Linear, ParamStore};

/// `Σ_i softmax(logits)_i · candidates[i]`.
///
/// `logits` is a vector or `1 × n` row; every candidate is `batch × d`.
pub fn mixed_cell_input<'t>(logits: Var<'t>, candidates: &[Var<'t>]) -> Result<Var<'t>> {
    let shape = logits.shape();
    let axis = shape.len().checked_sub(1).ok_or_else(|| Error::shape("mixed_cell_input", "scalar logits"))?;
    if shape[axis] != candidates.len() || shape.iter().product::<usize>() != candidates.len() {
        return Err(Error::shape(
            "mixed_cell_input",
            format!("{} logits for {} candidates", shape[axis], candidates.len()),
        ));
    }
    let first = candidates[0].shape();
    if candidates.iter().any(|c| c.shape() != first) {
        return Err(Error::shape("mixed_cell_input", "candidate shapes differ"));
    }
    let weights = logits.softmax(axis)?;
    let mut acc: Option<Var<'t>> = None;
    for (i, &cand) in candidates.iter().enumerate() {
        let term = cand.mul(weights.slice(axis, i, 1)?)?;
        acc = Some(match acc {
            Some(a) => a.add(term)?,
            None => term,
        });
    }
    Ok(acc.expect("at least one candidate"))
}

/// `Σ_p softmax(gamma)_p · primitive_p(Σ_j softmax(beta)_j · pair_j)`,
/// where the beta mixture is taken separately for each slot of the pair.
///
/// `primitives` must hold one entry per element of [`PrimitiveOp::ALL`].
pub fn mixed_step<'t>(
    params: &Bound<'t>,
    primitives: &[Primitive],
    beta: Var<'t>,
    gamma: Var<'t>,
    pair_candidates: &[(Var<'t>, Var<'t>)],
) -> Result<Var<'t>> {
    if primitives.len() != PrimitiveOp::ALL.len() || gamma.value().numel() != primitives.len() {
        return Err(Error::shape(
            "mixed_step",
            format!("{} primitives, {} gamma logits", primitives.len(), gamma.value().numel()),
        ));
    }
    let lefts: Vec<Var<'t>> = pair_candidates.iter().map(|p| p.0).collect();
    let rights: Vec<Var<'t>> = pair_candidates.iter().map(|p| p.1).collect();
    let x = mixed_cell_input(beta, &lefts)?;
    let y = mixed_cell_input(beta, &rights)?;
    let axis = gamma.shape().len() - 1;
    let weights = gamma.softmax(axis)?;
    let mut acc: Option<Var<'t>> = None;
    for (p, prim) in primitives.iter().enumerate() {
        let term = prim.forward(params, x, y)?.mul(weights.slice(axis, p, 1)?)?;
        acc = Some(match acc {
            Some(a) => a.add(term)?,
            None => term,
        });
    }
    Ok(acc.expect("five primitives"))
}

/// Constant `k × P` matrix mapping per-candidate logits onto the additive
/// score `alpha_i + alpha_j` of every ordered pair `(i, j)`.
pub(crate) fn pair_score_matrix(k: usize) -> Tensor {
    let pairs = ordered_pairs(k);
    let mut data = vec![0.0; k * pairs.len()];
    for (p, &(i, j)) in pairs.iter().enumerate() {
        data[i * pairs.len() + p] = 1.0;
        data[j * pairs.len() + p] = 1.0;
    }
    Tensor::from_parts(vec![k, pairs.len()], data)
}

#[derive(Clone, Debug)]
struct SuperStep {
    primitives: Vec<Primitive>,
}

#[derive(Clone, Debug)]
struct SuperCell {
    steps: Vec<SuperStep>,
    out: Linear,
}

/// The full mixed network: backbone adapters, then `num_cells` fusion
/// cells whose inputs, wiring and operators are all softmax mixtures.
#[derive(Clone, Debug)]
pub struct Supernet {
    config: SearchSpaceConfig,
    adapters: Vec<Vec<Linear>>,
    cells: Vec<SuperCell>,
}

/// Parameter names shared by the mixed and the instantiated networks.
pub(crate) mod names {
    pub fn adapter(prefix: &str, m: usize, l: usize) -> String {
        format!("{prefix}adapter.{m}.{l}")
    }

    pub fn primitive(prefix: &str, c: usize, s: usize, op: super::PrimitiveOp) -> String {
        format!("{prefix}cell.{c}.step.{s}.{op}")
    }

    pub fn cell_out(prefix: &str, c: usize) -> String {
        format!("{prefix}cell.{c}.out")
    }
}

impl Supernet {
    /// Registers all weights under `prefix` in `store`.
    pub fn new<R: Rng + ?Sized>(
        config: &SearchSpaceConfig,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let mut adapters = Vec::new();
        for (m, layers) in config.features_per_modality.iter().enumerate() {
            let mut row = Vec::new();
            for (l, &dim) in layers.iter().enumerate() {
                row.push(Linear::new(store, &names::adapter(prefix, m, l), dim, h, true, rng)?);
            }
            adapters.push(row);
        }
        let mut cells = Vec::new();
        for c in 0..config.num_cells {
            let mut steps = Vec::new();
            for s in 0..config.steps_per_cell {
                let primitives = PrimitiveOp::ALL
                    .iter()
                    .map(|&op| Primitive::new(op, store, &names::primitive(prefix, c, s, op), h, rng))
                    .collect::<Result<Vec<_>>>()?;
                steps.push(SuperStep { primitives });
            }
            let out = Linear::new(store, &names::cell_out(prefix, c), config.steps_per_cell * h, h, true, rng)?;
            cells.push(SuperCell { steps, out });
        }
        Ok(Supernet {
            config: config.clone(),
            adapters,
            cells,
        })
    }

    pub fn config(&self) -> &SearchSpaceConfig {
        &self.config
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    /// Projects raw backbone features (`[modality][layer]`, each
    /// `batch × dim`) to the hidden width.
    pub fn adapt<'t>(&self, params: &Bound<'t>, features: &[Vec<Var<'t>>]) -> Result<Vec<Var<'t>>> {
        adapt_features(&self.config, &self.adapters_flat(), params, features)
    }

    fn adapters_flat(&self) -> Vec<Option<&Linear>> {
        self.adapters.iter().flatten().map(Some).collect()
    }

    /// One cell of the mixed network given every legal candidate.
    pub fn cell_forward<'t>(
        &self,
        params: &Bound<'t>,
        arch: &Bound<'t>,
        arch_ids: &ArchParams,
        cell: usize,
        available: &[Var<'t>],
    ) -> Result<Var<'t>> {
        let expected = self.config.cell_candidates(cell).len();
        if available.len() != expected {
            return Err(Error::shape(
                "cell_forward",
                format!("cell {cell} needs {expected} candidates, got {}", available.len()),
            ));
        }
        let tape = available[0].tape();
        let pairs = ordered_pairs(expected);
        let score = tape.constant(pair_score_matrix(expected));
        let pair_logits = arch.var(arch_ids.alpha_id(cell)).matmul(score)?;
        let lefts: Vec<Var<'t>> = pairs.iter().map(|&(i, _)| available[i]).collect();
        let rights: Vec<Var<'t>> = pairs.iter().map(|&(_, j)| available[j]).collect();
        let mut nodes = vec![
            mixed_cell_input(pair_logits, &lefts)?,
            mixed_cell_input(pair_logits, &rights)?,
        ];
        let sc = &self.cells[cell];
        for (s, step) in sc.steps.iter().enumerate() {
            let pair_candidates: Vec<(Var<'t>, Var<'t>)> = ordered_pairs(step_candidate_count(s))
                .into_iter()
                .map(|(i, j)| (nodes[i], nodes[j]))
                .collect();
            let out = mixed_step(
                params,
                &step.primitives,
                arch.var(arch_ids.beta_id(cell, s)),
                arch.var(arch_ids.gamma_id(cell, s)),
                &pair_candidates,
            )?;
            nodes.push(out);
        }
        let cat = tape.concat(&nodes[2..], 1)?;
        sc.out.forward(params, cat)
    }

    /// Encoder representation: all cell outputs concatenated.
    pub fn forward<'t>(
        &self,
        params: &Bound<'t>,
        arch: &Bound<'t>,
        arch_ids: &ArchParams,
        features: &[Vec<Var<'t>>],
    ) -> Result<Var<'t>> {
        let mut available = self.adapt(params, features)?;
        let base = available.len();
        for c in 0..self.config.num_cells {
            let out = self.cell_forward(params, arch, arch_ids, c, &available[..base + c])?;
            available.push(out);
        }
        let tape = available[0].tape();
        tape.concat(&available[base..], 1)
    }
}

pub(crate) fn adapt_features<'t>(
    config: &SearchSpaceConfig,
    adapters: &[Option<&Linear>],
    params: &Bound<'t>,
    features: &[Vec<Var<'t>>],
) -> Result<Vec<Var<'t>>> {
    if features.len() != config.num_modalities()
        || features
            .iter()
            .zip(&config.features_per_modality)
            .any(|(f, dims)| f.len() != dims.len())
    {
        return Err(Error::shape("adapt", "feature layout does not match the search space"));
    }
    let flat: Vec<Var<'t>> = features.iter().flatten().copied().collect();
    let sources = config.feature_sources();
    let mut out = Vec::with_capacity(flat.len());
    for ((x, adapter), src) in flat.into_iter().zip(adapters).zip(sources) {
        match adapter {
            Some(a) => {
                if x.shape().len() != 2 || x.shape()[1] != a.in_dim {
                    return Err(Error::shape("adapt", format!("feature {src}: {:?}", x.shape())));
                }
                out.push(a.forward(params, x)?);
            }
            // Unused by the network; never read.
            None => out.push(x),
        }
    }
    Ok(out)
}

pub(crate) fn source_index(config: &SearchSpaceConfig, src: Source) -> Option<usize> {
    let features = config.feature_sources();
    match src {
        Source::Feature { .. } => features.iter().position(|&f| f == src),
        Source::Cell(k) if k < config.num_cells => Some(features.len() + k),
        _ => None,
    }
}
