use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::ArchParams;
use super::config::{ordered_pairs, step_candidate_count, SearchSpaceConfig, Source};
use super::primitives::PrimitiveOp;
use crate::error::{Error, Result};

/// Discrete architecture extracted from [`ArchParams`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Genotype {
    pub cells: Vec<CellGene>,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellGene {
    /// The two selected inputs, in candidate order.
    pub inputs: [Source; 2],
    pub steps: Vec<StepGene>,
}

/// One inner step node. A step whose op is `Zero` is pruned: it outputs
/// zeros and owns no weights.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepGene {
    /// Drawn from the cell's two inputs and `step:k` for earlier steps.
    pub pair: [Source; 2],
    pub op: PrimitiveOp,
}

impl StepGene {
    pub fn is_pruned(&self) -> bool {
        self.op == PrimitiveOp::Zero
    }
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Discretizes `arch`.
///
/// * cells keep their two highest-scoring candidates;
/// * steps keep their highest-scoring input pair;
/// * steps take the best non-`Zero` primitive, unless `Zero` is strictly
///   larger than all others, which prunes the step.
///
/// Ties always go to the lowest candidate index.
pub fn derive_genotype(arch: &ArchParams, config: &SearchSpaceConfig) -> Result<Genotype> {
    config.validate()?;
    if !arch.is_consistent_with(config) {
        return Err(Error::Config("architecture parameters do not match the search space".into()));
    }
    let zero = PrimitiveOp::Zero.index();
    let mut cells = Vec::with_capacity(config.num_cells);
    for c in 0..config.num_cells {
        let candidates = config.cell_candidates(c);
        let alpha = arch.alpha(c);
        let mut order: Vec<usize> = (0..alpha.len()).collect();
        order.sort_by(|&a, &b| alpha[b].total_cmp(&alpha[a]).then(a.cmp(&b)));
        let (i, j) = (order[0].min(order[1]), order[0].max(order[1]));
        let inputs = [candidates[i], candidates[j]];

        let mut steps = Vec::with_capacity(config.steps_per_cell);
        for s in 0..config.steps_per_cell {
            let (a, b) = ordered_pairs(step_candidate_count(s))[argmax(arch.beta(c, s))];
            let node = |k: usize| if k < 2 { inputs[k] } else { Source::Step(k - 2) };
            let gamma = arch.gamma(c, s);
            let best = argmax(&gamma[..zero]);
            let op = if gamma[zero] > gamma[best] {
                PrimitiveOp::Zero
            } else {
                PrimitiveOp::ALL[best]
            };
            steps.push(StepGene {
                pair: [node(a), node(b)],
                op,
            });
        }
        cells.push(CellGene { inputs, steps });
    }
    Ok(Genotype {
        cells,
        config_hash: config.hash(),
    })
}

impl Genotype {
    /// Structural validation against `config`: counts, acyclicity, index
    /// validity, and at least one live step per cell.
    pub fn validate(&self, config: &SearchSpaceConfig) -> Result<()> {
        config.validate()?;
        let err = |m: String| Err(Error::Genotype(m));
        if self.config_hash != config.hash() {
            return err("config hash does not match the search space".into());
        }
        if self.cells.len() != config.num_cells {
            return err(format!("{} cells, expected {}", self.cells.len(), config.num_cells));
        }
        for (c, cell) in self.cells.iter().enumerate() {
            let legal: BTreeSet<Source> = config.cell_candidates(c).into_iter().collect();
            if cell.inputs[0] == cell.inputs[1] {
                return err(format!("cell {c} uses {} twice", cell.inputs[0]));
            }
            for src in cell.inputs {
                if !legal.contains(&src) {
                    return err(format!("cell {c} cannot consume {src}"));
                }
            }
            if cell.steps.len() != config.steps_per_cell {
                return err(format!("cell {c} has {} steps, expected {}", cell.steps.len(), config.steps_per_cell));
            }
            for (s, step) in cell.steps.iter().enumerate() {
                if step.pair[0] == step.pair[1] {
                    return err(format!("cell {c} step {s} pairs {} with itself", step.pair[0]));
                }
                for src in step.pair {
                    let ok = match src {
                        Source::Step(k) => k < s,
                        other => cell.inputs.contains(&other),
                    };
                    if !ok {
                        return err(format!("cell {c} step {s} cannot consume {src}"));
                    }
                }
            }
            if cell.steps.iter().all(StepGene::is_pruned) {
                return err(format!("cell {c} has every step pruned"));
            }
        }
        Ok(())
    }

    /// Canonical JSON: sorted keys, no insignificant whitespace.
    pub fn to_json(&self) -> String {
        serde_json::to_value(self)
            .expect("genotype serializes")
            .to_string()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    /// Backbone features consumed directly by any cell.
    pub fn selected_features(&self) -> BTreeSet<Source> {
        self.cells
            .iter()
            .flat_map(|c| c.inputs)
            .filter(|s| matches!(s, Source::Feature { .. }))
            .collect()
    }

    /// Logits that put a margin of `margin` behind every choice of this
    /// genotype, so the relaxed network approaches the discrete one.
    pub fn saturated_arch(&self, config: &SearchSpaceConfig, margin: f64) -> Result<ArchParams> {
        self.validate(config)?;
        let mut arch = ArchParams::zeros(config)?;
        for (c, cell) in self.cells.iter().enumerate() {
            let candidates = config.cell_candidates(c);
            let alpha: Vec<f64> = candidates
                .iter()
                .map(|s| if cell.inputs.contains(s) { margin } else { 0.0 })
                .collect();
            arch.set_alpha(c, &alpha)?;
            for (s, step) in cell.steps.iter().enumerate() {
                let index = |src: Source| match src {
                    Source::Step(k) => k + 2,
                    other => cell.inputs.iter().position(|&i| i == other).expect("validated"),
                };
                let (a, b) = (index(step.pair[0]), index(step.pair[1]));
                let chosen = (a.min(b), a.max(b));
                let beta: Vec<f64> = ordered_pairs(step_candidate_count(s))
                    .into_iter()
                    .map(|p| if p == chosen { margin } else { 0.0 })
                    .collect();
                arch.set_beta(c, s, &beta)?;
                let mut gamma = vec![0.0; PrimitiveOp::ALL.len()];
                gamma[step.op.index()] = margin;
                arch.set_gamma(c, s, &gamma)?;
            }
        }
        Ok(arch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> SearchSpaceConfig {
        SearchSpaceConfig {
            features_per_modality: vec![vec![4, 4], vec![4, 4]],
            num_cells: 1,
            steps_per_cell: 2,
            hidden_dim: 3,
        }
    }

    #[test]
    fn top_two_alpha_inputs() {
        let cfg = config();
        let mut arch = ArchParams::zeros(&cfg).unwrap();
        arch.set_alpha(0, &[3.0, 1.0, 2.0, 0.0]).unwrap();
        let g = derive_genotype(&arch, &cfg).unwrap();
        assert_eq!(
            g.cells[0].inputs,
            [
                Source::Feature { modality: 0, layer: 0 },
                Source::Feature { modality: 1, layer: 0 }
            ]
        );
    }

    #[test]
    fn uniform_gamma_takes_first_non_zero_primitive() {
        let cfg = config();
        let arch = ArchParams::zeros(&cfg).unwrap();
        let g = derive_genotype(&arch, &cfg).unwrap();
        assert!(g.cells[0].steps.iter().all(|s| s.op == PrimitiveOp::Sum));
    }

    #[test]
    fn zero_prunes_only_when_strictly_largest() {
        let cfg = config();
        let mut arch = ArchParams::zeros(&cfg).unwrap();
        arch.set_gamma(0, 0, &[0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        arch.set_gamma(0, 1, &[0.0, 1.0, 0.0, 0.0, 1.5]).unwrap();
        let g = derive_genotype(&arch, &cfg).unwrap();
        assert_eq!(g.cells[0].steps[0].op, PrimitiveOp::ScaledDotAttention);
        assert_eq!(g.cells[0].steps[1].op, PrimitiveOp::Zero);
        g.validate(&cfg).unwrap();
    }

    #[test]
    fn all_pruned_cell_is_rejected() {
        let cfg = config();
        let mut arch = ArchParams::zeros(&cfg).unwrap();
        arch.set_gamma(0, 0, &[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        arch.set_gamma(0, 1, &[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let g = derive_genotype(&arch, &cfg).unwrap();
        assert!(matches!(g.validate(&cfg), Err(Error::Genotype(_))));
    }

    #[test]
    fn json_shape_and_stability() {
        let cfg = config();
        let g = derive_genotype(&ArchParams::zeros(&cfg).unwrap(), &cfg).unwrap();
        let json = g.to_json();
        assert!(json.starts_with(r#"{"cells":[{"inputs":["0:0","0:1"],"steps":[{"op":"Sum","pair":["0:0","0:1"]}"#));
        let back = Genotype::from_json(&json).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), json);
        assert!(Genotype::from_json(r#"{"cells":[],"config_hash":"x","extra":1}"#).is_err());
    }

    #[test]
    fn validation_catches_cycles_and_bad_sources() {
        let cfg = config();
        let mut g = derive_genotype(&ArchParams::zeros(&cfg).unwrap(), &cfg).unwrap();
        g.cells[0].steps[0].pair[1] = Source::Step(0);
        assert!(g.validate(&cfg).is_err());
        let mut g2 = derive_genotype(&ArchParams::zeros(&cfg).unwrap(), &cfg).unwrap();
        g2.cells[0].inputs[1] = Source::Cell(0);
        assert!(g2.validate(&cfg).is_err());
        let mut g3 = derive_genotype(&ArchParams::zeros(&cfg).unwrap(), &cfg).unwrap();
        g3.config_hash = "other".into();
        assert!(g3.validate(&cfg).is_err());
    }
}
