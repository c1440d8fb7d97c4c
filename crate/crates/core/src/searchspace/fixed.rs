//! A discrete fusion network built from a [`Genotype`].

use rand::Rng;

use super::config::{SearchSpaceConfig, Source};
use super::genotype::Genotype;
use super::mixed::{adapt_features, names, source_index};
use super::primitives::{Primitive, PrimitiveOp};
use crate::autodiff::{Tensor, Var};
use crate::error::Result;
use crate::nn::{Bound, Linear, ParamStore};

#[derive(Clone, Debug)]
struct FixedStep {
    pair: [usize; 2],
    primitive: Option<Primitive>,
}

#[derive(Clone, Debug)]
struct FixedCell {
    inputs: [usize; 2],
    steps: Vec<FixedStep>,
    out: Linear,
}

/// Network holding only the edges and primitives a genotype retains.
/// Parameter names match [`super::Supernet`] so weights can be compared
/// across the two.
#[derive(Clone, Debug)]
pub struct FusionNetwork {
    config: SearchSpaceConfig,
    genotype: Genotype,
    adapters: Vec<Option<Linear>>,
    cells: Vec<FixedCell>,
}

/// Builds the fixed network for `genotype` with fresh weights registered
/// under `prefix`.
pub fn instantiate<R: Rng + ?Sized>(
    genotype: &Genotype,
    config: &SearchSpaceConfig,
    store: &mut ParamStore,
    prefix: &str,
    rng: &mut R,
) -> Result<FusionNetwork> {
    genotype.validate(config)?;
    let h = config.hidden_dim;
    let used = genotype.selected_features();
    let mut adapters = Vec::new();
    for (m, layers) in config.features_per_modality.iter().enumerate() {
        for (l, &dim) in layers.iter().enumerate() {
            let src = Source::Feature { modality: m, layer: l };
            adapters.push(if used.contains(&src) {
                Some(Linear::new(store, &names::adapter(prefix, m, l), dim, h, true, rng)?)
            } else {
                None
            });
        }
    }
    let mut cells = Vec::new();
    for (c, gene) in genotype.cells.iter().enumerate() {
        let inputs = gene
            .inputs
            .map(|s| source_index(config, s).expect("validated genotype"));
        let mut steps = Vec::new();
        for (s, step) in gene.steps.iter().enumerate() {
            let node = |src: Source| match src {
                Source::Step(k) => k + 2,
                other => gene.inputs.iter().position(|&i| i == other).expect("validated genotype"),
            };
            let primitive = if step.op == PrimitiveOp::Zero {
                None
            } else {
                Some(Primitive::new(step.op, store, &names::primitive(prefix, c, s, step.op), h, rng)?)
            };
            steps.push(FixedStep {
                pair: step.pair.map(node),
                primitive,
            });
        }
        let out = Linear::new(store, &names::cell_out(prefix, c), config.steps_per_cell * h, h, true, rng)?;
        cells.push(FixedCell { inputs, steps, out });
    }
    Ok(FusionNetwork {
        config: config.clone(),
        genotype: genotype.clone(),
        adapters,
        cells,
    })
}

impl FusionNetwork {
    pub fn genotype(&self) -> &Genotype {
        &self.genotype
    }

    pub fn config(&self) -> &SearchSpaceConfig {
        &self.config
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    /// Encoder representation: all cell outputs concatenated.
    pub fn forward<'t>(&self, params: &Bound<'t>, features: &[Vec<Var<'t>>]) -> Result<Var<'t>> {
        let adapters: Vec<Option<&Linear>> = self.adapters.iter().map(Option::as_ref).collect();
        let mut available = adapt_features(&self.config, &adapters, params, features)?;
        let base = available.len();
        for cell in &self.cells {
            let mut nodes = vec![available[cell.inputs[0]], available[cell.inputs[1]]];
            let tape = nodes[0].tape();
            for step in &cell.steps {
                let (x, y) = (nodes[step.pair[0]], nodes[step.pair[1]]);
                let out = match &step.primitive {
                    Some(p) => p.forward(params, x, y)?,
                    None => tape.constant(Tensor::zeros(&x.shape())),
                };
                nodes.push(out);
            }
            let cat = tape.concat(&nodes[2..], 1)?;
            available.push(cell.out.forward(params, cat)?);
        }
        let tape = available[0].tape();
        tape.concat(&available[base..], 1)
    }
}
