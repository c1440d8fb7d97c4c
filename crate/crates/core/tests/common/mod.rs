//! Shared helpers and independent reference implementations for the
//! integration tests.
#![allow(dead_code)]

use mmnas::autodiff::Tensor;
use mmnas::searchspace::{ordered_pairs, step_candidate_count, CellGene, Genotype, PrimitiveOp, SearchSpaceConfig, Source, StepGene};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Uniform values with magnitude in `[lo, hi]` and random sign.
pub fn away_from_zero(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.random_range(lo..hi);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn small_space() -> SearchSpaceConfig {
    SearchSpaceConfig {
        features_per_modality: vec![vec![4, 3], vec![5, 2]],
        num_cells: 2,
        steps_per_cell: 2,
        hidden_dim: 3,
    }
}

/// Uniformly random valid genotype, drawn without going through any
/// architecture logits.
pub fn random_genotype(config: &SearchSpaceConfig, rng: &mut impl Rng) -> Genotype {
    loop {
        let mut cells = Vec::new();
        for c in 0..config.num_cells {
            let candidates = config.cell_candidates(c);
            let mut idx: Vec<usize> = (0..candidates.len()).collect();
            idx.shuffle(rng);
            let (i, j) = (idx[0].min(idx[1]), idx[0].max(idx[1]));
            let inputs = [candidates[i], candidates[j]];
            let steps = (0..config.steps_per_cell)
                .map(|s| {
                    let pairs = ordered_pairs(step_candidate_count(s));
                    let (a, b) = pairs[rng.random_range(0..pairs.len())];
                    let node = |k: usize| if k < 2 { inputs[k] } else { Source::Step(k - 2) };
                    StepGene {
                        pair: [node(a), node(b)],
                        op: PrimitiveOp::ALL[rng.random_range(0..PrimitiveOp::ALL.len())],
                    }
                })
                .collect();
            cells.push(CellGene { inputs, steps });
        }
        let g = Genotype {
            cells,
            config_hash: config.hash(),
        };
        if g.validate(config).is_ok() {
            return g;
        }
    }
}

/// NT-Xent written directly from its definition with plain loops:
/// `L = 1/(2N) Σ_i −ln( exp(s_ij) / Σ_{k≠i} exp(s_ik) )`, `s = cos/τ`.
pub fn ntxent_naive(z: &[Vec<f64>], tau: f64) -> f64 {
    let n = z.len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b));
    let mut total = 0.0;
    for i in 0..n {
        let j = if i % 2 == 0 { i + 1 } else { i - 1 };
        let num = (cos(&z[i], &z[j]) / tau).exp();
        let den: f64 = (0..n).filter(|&k| k != i).map(|k| (cos(&z[i], &z[k]) / tau).exp()).sum();
        total += -(num / den).ln();
    }
    total / n as f64
}

/// Weighted F1 through precision and recall of each label's 2×2
/// confusion matrix `[[tn, fp], [fn, tp]]`.
pub fn weighted_f1_oracle(pred: &[Vec<u8>], truth: &[Vec<u8>]) -> f64 {
    let labels = truth[0].len();
    let mut scores = Vec::new();
    for l in 0..labels {
        let mut cm = [[0usize; 2]; 2];
        for (p, t) in pred.iter().zip(truth) {
            cm[t[l] as usize][p[l] as usize] += 1;
        }
        let (tp, fp, fneg) = (cm[1][1] as f64, cm[0][1] as f64, cm[1][0] as f64);
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        scores.push((f1, tp + fneg));
    }
    let total: f64 = scores.iter().map(|s| s.1).sum();
    if total == 0.0 {
        return 0.0;
    }
    scores.iter().map(|(f, w)| f * w / total).sum()
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `n` fair coin flips.
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let choose = |n: usize, k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    (wins..=n).map(|k| choose(n, k)).sum::<f64>() / 2f64.powi(n as i32)
}
