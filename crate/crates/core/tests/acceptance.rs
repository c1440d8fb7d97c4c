//! Acceptance harness: runs every release criterion and prints one
//! PASS/FAIL line each. Exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use mmnas::autodiff::{check_gradients, Tape, Tensor, Var};
use mmnas::bilevel::{run_search, SearchConfig, SearchState};
use mmnas::contrastive::{build_views, ntxent_loss, ContrastiveConfig};
use mmnas::data::{generate, mmnf, Dataset, SyntheticSpec};
use mmnas::exec::Exec;
use mmnas::nn::{Bound, ParamStore};
use mmnas::pipeline::{checkpoint, run_pipeline, weighted_f1, PipelineConfig, PipelineInputs, Provenance, StageToggles};
use mmnas::report::NullSink;
use mmnas::searchspace::{
    instantiate, mixed_cell_input, mixed_step, ordered_pairs, step_candidate_count, Genotype, Primitive,
    PrimitiveOp, SearchSpaceConfig, Supernet,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

const FD_STEP: f64 = 1e-5;
const CASES: usize = 100;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- 1

#[derive(Clone, Copy, Default)]
struct Knobs {
    axis: usize,
    start: usize,
    len: usize,
    c: f64,
}

/// `Σ (y²/2 + y)`: a nonlinear scalar readout so every output coordinate
/// carries a distinct upstream gradient.
fn readout<'t>(y: Var<'t>) -> mmnas::Result<Var<'t>> {
    y.mul(y)?.scale(0.5)?.add(y)?.sum()
}

fn grad_family<G, F>(name: &str, seed: u64, tol: f64, gen: G, f: F) -> Result<(String, f64), String>
where
    G: Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, Knobs),
    F: for<'t> Fn(&'t Tape, &[Var<'t>], Knobs) -> mmnas::Result<Var<'t>> + Sync + Send,
{
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let (inputs, knobs) = gen(&mut rng);
        let report = check_gradients(&inputs, FD_STEP, Exec::Parallel, |t, v| f(t, v, knobs))
            .map_err(|e| format!("{name} case {case}: {e}"))?;
        worst = worst.max(report.max_rel_error);
        if report.max_rel_error >= tol {
            return Err(format!("{name} case {case}: relative error {:.3e} >= {tol:e}", report.max_rel_error));
        }
    }
    Ok((name.to_string(), worst))
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..5))
}

fn broadcast_shape(rng: &mut ChaCha8Rng, r: usize, c: usize) -> [usize; 2] {
    match rng.random_range(0..3) {
        0 => [r, c],
        1 => [1, c],
        _ => [r, 1],
    }
}

fn gen_unary(lo: f64, hi: f64, signed: bool) -> impl Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, Knobs) {
    move |rng| {
        let (r, c) = dims(rng);
        let x = if signed { away_from_zero(rng, &[r, c], lo, hi) } else { uniform(rng, &[r, c], lo, hi) };
        (vec![x], Knobs::default())
    }
}

fn gen_axis(lo: f64, hi: f64, signed: bool) -> impl Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, Knobs) {
    move |rng| {
        let (r, c) = dims(rng);
        let x = if signed { away_from_zero(rng, &[r, c], lo, hi) } else { uniform(rng, &[r, c], lo, hi) };
        let axis = rng.random_range(0..2);
        (vec![x], Knobs { axis, ..Knobs::default() })
    }
}

fn gen_binary(rng: &mut ChaCha8Rng) -> (Vec<Tensor>, Knobs) {
    let (r, c) = dims(rng);
    let a = uniform(rng, &[r, c], -2.0, 2.0);
    let shape = broadcast_shape(rng, r, c);
    let b = uniform(rng, &shape, -2.0, 2.0);
    (vec![a, b], Knobs::default())
}

fn primitive_suite() -> Result<Vec<(String, f64)>, String> {
    let tol = 1e-6;
    let mut out = Vec::new();
    out.push(grad_family("matmul", 1, tol, |rng| {
        let (r, k) = dims(rng);
        let c = rng.random_range(1..5);
        (vec![uniform(rng, &[r, k], -2.0, 2.0), uniform(rng, &[k, c], -2.0, 2.0)], Knobs::default())
    }, |_, v, _| readout(v[0].matmul(v[1])?))?);
    out.push(grad_family("transpose", 2, tol, gen_unary(-2.0, 2.0, false), |_, v, _| {
        let y = v[0].t()?;
        let w = y.tape().constant(Tensor::full(&y.shape(), 0.5));
        readout(y.mul(w)?.add(y)?)
    })?);
    out.push(grad_family("add", 3, tol, gen_binary, |_, v, _| readout(v[0].add(v[1])?))?);
    out.push(grad_family("sub", 4, tol, gen_binary, |_, v, _| readout(v[0].sub(v[1])?))?);
    out.push(grad_family("mul", 5, tol, gen_binary, |_, v, _| readout(v[0].mul(v[1])?))?);
    out.push(grad_family("div", 6, tol, |rng| {
        let (r, c) = dims(rng);
        let a = uniform(rng, &[r, c], -2.0, 2.0);
        let shape = broadcast_shape(rng, r, c);
        let b = away_from_zero(rng, &shape, 0.5, 2.0);
        (vec![a, b], Knobs::default())
    }, |_, v, _| readout(v[0].div(v[1])?))?);
    out.push(grad_family("scale", 7, tol, |rng| {
        let (r, c) = dims(rng);
        (vec![uniform(rng, &[r, c], -2.0, 2.0)], Knobs { c: rng.random_range(-3.0..3.0), ..Knobs::default() })
    }, |_, v, k| readout(v[0].scale(k.c)?))?);
    out.push(grad_family("relu", 8, tol, gen_unary(0.01, 2.0, true), |_, v, _| readout(v[0].relu()?))?);
    out.push(grad_family("sigmoid", 9, tol, gen_unary(-3.0, 3.0, false), |_, v, _| readout(v[0].sigmoid()?))?);
    out.push(grad_family("tanh", 10, tol, gen_unary(-2.0, 2.0, false), |_, v, _| readout(v[0].tanh()?))?);
    out.push(grad_family("exp", 11, tol, gen_unary(-2.0, 1.0, false), |_, v, _| readout(v[0].exp()?))?);
    out.push(grad_family("log", 12, tol, gen_unary(0.3, 3.0, false), |_, v, _| readout(v[0].log()?))?);
    out.push(grad_family("softplus", 13, tol, gen_unary(-3.0, 3.0, false), |_, v, _| readout(v[0].softplus()?))?);
    out.push(grad_family("softmax", 14, tol, gen_axis(-3.0, 3.0, false), |_, v, k| readout(v[0].softmax(k.axis)?))?);
    out.push(grad_family("logsumexp", 15, tol, gen_axis(-3.0, 3.0, false), |_, v, k| readout(v[0].logsumexp(k.axis)?))?);
    out.push(grad_family("sum", 16, tol, gen_unary(-2.0, 2.0, false), |_, v, _| {
        let s = v[0].mul(v[0])?.sum()?;
        s.mul(s)
    })?);
    out.push(grad_family("mean", 17, tol, gen_unary(-2.0, 2.0, false), |_, v, _| {
        let m = v[0].mul(v[0])?.mean()?;
        m.mul(m)
    })?);
    out.push(grad_family("sum_axis", 18, tol, gen_axis(-2.0, 2.0, false), |_, v, k| readout(v[0].sum_axis(k.axis)?))?);
    out.push(grad_family("l2_norm", 19, tol, gen_axis(0.2, 2.0, true), |_, v, k| readout(v[0].l2_norm(k.axis)?))?);
    out.push(grad_family("slice", 20, tol, |rng| {
        let (r, c) = dims(rng);
        let axis = rng.random_range(0..2);
        let n = [r, c][axis];
        let start = rng.random_range(0..n);
        let len = rng.random_range(1..=n - start);
        (vec![uniform(rng, &[r, c], -2.0, 2.0)], Knobs { axis, start, len, c: 0.0 })
    }, |_, v, k| readout(v[0].slice(k.axis, k.start, k.len)?))?);
    out.push(grad_family("without_diagonal", 21, tol, |rng| {
        let n = rng.random_range(2..6);
        (vec![uniform(rng, &[n, n], -2.0, 2.0)], Knobs::default())
    }, |_, v, _| readout(v[0].without_diagonal()?))?);
    out.push(grad_family("row_attention", 22, tol, |rng| {
        let (r, d) = (rng.random_range(1..4), rng.random_range(1..5));
        let t: Vec<Tensor> = (0..3).map(|_| uniform(rng, &[r, d], -1.5, 1.5)).collect();
        (t, Knobs { c: rng.random_range(0.2..1.5), ..Knobs::default() })
    }, |_, v, k| readout(v[0].row_attention(v[1], v[2], k.c)?))?);
    out.push(grad_family("concat", 23, tol, |rng| {
        let (r, c) = dims(rng);
        let axis = rng.random_range(0..2);
        let parts = rng.random_range(1..4);
        let t: Vec<Tensor> = (0..parts)
            .map(|_| {
                let extra = rng.random_range(1..4);
                let shape = if axis == 0 { [extra, c] } else { [r, extra] };
                uniform(rng, &shape, -2.0, 2.0)
            })
            .collect();
        (t, Knobs { axis, ..Knobs::default() })
    }, |t, v, k| readout(t.concat(v, k.axis)?))?);
    Ok(out)
}

fn composite_suite() -> Result<Vec<(String, f64)>, String> {
    let tol = 1e-5;
    let mut out = Vec::new();
    out.push(grad_family("ntxent", 31, tol, |rng| {
        let n = rng.random_range(2..5);
        let d = rng.random_range(2..6);
        (vec![uniform(rng, &[2 * n, d], -1.0, 1.0)], Knobs { c: rng.random_range(0.1..1.0), ..Knobs::default() })
    }, |_, v, k| ntxent_loss(v[0], k.c))?);
    out.push(grad_family("mixed_cell_input", 32, tol, |rng| {
        let k = rng.random_range(1..6);
        let (r, d) = dims(rng);
        let mut t = vec![uniform(rng, &[1, k], -2.0, 2.0)];
        t.extend((0..k).map(|_| uniform(rng, &[r, d], -2.0, 2.0)));
        (t, Knobs::default())
    }, |_, v, _| readout(mixed_cell_input(v[0], &v[1..])?))?);

    // mixed_step: inputs are [beta, gamma, nodes.., primitive weights..].
    let mut rng = rng(33);
    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let d = rng.random_range(1..4);
        let rows = rng.random_range(1..4);
        let step = rng.random_range(0..3);
        let mut store = ParamStore::new();
        let primitives: Vec<Primitive> = PrimitiveOp::ALL
            .iter()
            .map(|&op| Primitive::new(op, &mut store, &format!("p.{op}"), d, &mut rng).unwrap())
            .collect();
        let nodes = step_candidate_count(step);
        let pairs = ordered_pairs(nodes);
        let mut inputs = vec![
            uniform(&mut rng, &[1, pairs.len()], -2.0, 2.0),
            uniform(&mut rng, &[1, PrimitiveOp::ALL.len()], -2.0, 2.0),
        ];
        inputs.extend((0..nodes).map(|_| uniform(&mut rng, &[rows, d], -1.5, 1.5)));
        let weights_at = inputs.len();
        inputs.extend(store.iter().map(|(_, t)| t.clone()));
        let report = check_gradients(&inputs, FD_STEP, Exec::Parallel, |_, v| {
            let params = Bound::from_vars(v[weights_at..].to_vec());
            let node = &v[2..weights_at];
            let candidates: Vec<(Var<'_>, Var<'_>)> = pairs.iter().map(|&(i, j)| (node[i], node[j])).collect();
            readout(mixed_step(&params, &primitives, v[0], v[1], &candidates)?)
        })
        .map_err(|e| format!("mixed_step case {case}: {e}"))?;
        worst = worst.max(report.max_rel_error);
        if report.max_rel_error >= tol {
            return Err(format!("mixed_step case {case}: relative error {:.3e}", report.max_rel_error));
        }
    }
    out.push(("mixed_step".to_string(), worst));
    Ok(out)
}

fn criterion_1() -> Check {
    let started = Instant::now();
    let prims = primitive_suite()?;
    let comps = composite_suite()?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {:.1} s", elapsed.as_secs_f64()))?;
    let worst_p = prims.iter().map(|p| p.1).fold(0.0, f64::max);
    let worst_c = comps.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(format!(
        "{} primitives + {} composites x {CASES} cases; worst rel err {worst_p:.2e} / {worst_c:.2e}; {:.1} s",
        prims.len(),
        comps.len(),
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 2

fn loss_value(rows: &[Vec<f64>], tau: f64) -> mmnas::Result<f64> {
    let tape = Tape::new();
    let z = tape.constant(Tensor::from_rows(rows)?);
    Ok(ntxent_loss(z, tau)?.value().data()[0])
}

fn criterion_2() -> Check {
    let mut rng = rng(2);
    let mut worst: f64 = 0.0;
    for &n in &[2usize, 4, 8] {
        for _ in 0..50 {
            let d = rng.random_range(2..9);
            let tau = rng.random_range(0.05..2.0);
            let rows: Vec<Vec<f64>> = (0..2 * n)
                .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let diff = (loss_value(&rows, tau).map_err(e2s)? - ntxent_naive(&rows, tau)).abs();
            worst = worst.max(diff);
        }
    }
    ensure(worst <= 1e-9, || format!("random batches differ by {worst:.3e}"))?;
    let e1 = vec![1.0, 0.0];
    let e2 = vec![0.0, 1.0];
    let hand = loss_value(&[e1.clone(), e1, e2.clone(), e2], 1.0).map_err(e2s)?;
    let expected = (1.0 + 2.0 / std::f64::consts::E).ln();
    ensure((hand - expected).abs() <= 1e-9, || format!("hand case {hand} vs {expected}"))?;
    let single = loss_value(&[vec![0.3, -1.0], vec![2.0, 0.5]], 0.1).map_err(e2s)?;
    ensure(single == 0.0, || format!("N=1 gives {single}"))?;
    Ok(format!("oracle max diff {worst:.2e}; hand case {hand:.6}; N=1 -> 0"))
}

// ---------------------------------------------------------------- 3

fn relaxation_gap(space: &SearchSpaceConfig, genotype: &Genotype, seed: u64) -> mmnas::Result<f64> {
    let mut rng = rng(seed);
    let mut super_store = ParamStore::new();
    let supernet = Supernet::new(space, &mut super_store, "enc.", &mut rng)?;
    let mut fixed_store = ParamStore::new();
    let fixed = instantiate(genotype, space, &mut fixed_store, "enc.", &mut rng)?;
    let copied = fixed_store.copy_matching(&super_store);
    assert_eq!(copied, fixed_store.len(), "every fixed weight exists in the supernet");
    let arch = genotype.saturated_arch(space, 60.0)?;
    let batch = 5;
    let features: Vec<Vec<Tensor>> = space
        .features_per_modality
        .iter()
        .map(|dims| dims.iter().map(|&d| uniform(&mut rng, &[batch, d], -1.0, 1.0)).collect())
        .collect();

    let tape = Tape::new();
    let vars: Vec<Vec<Var<'_>>> = features.iter().map(|m| m.iter().map(|t| tape.constant(t.clone())).collect()).collect();
    let sw = super_store.bind(&tape, false);
    let sa = arch.store().bind(&tape, false);
    let relaxed = supernet.forward(&sw, &sa, &arch, &vars)?;
    let fw = fixed_store.bind(&tape, false);
    let discrete = fixed.forward(&fw, &vars)?;
    Ok(relaxed.value().max_abs_diff(&discrete.value()).expect("same shape"))
}

fn criterion_3() -> Check {
    let spaces = [
        small_space(),
        SearchSpaceConfig {
            features_per_modality: vec![vec![3, 2, 4], vec![2]],
            num_cells: 3,
            steps_per_cell: 3,
            hidden_dim: 4,
        },
    ];
    let mut rng = rng(3);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let space = &spaces[i % 2];
        let genotype = random_genotype(space, &mut rng);
        let gap = relaxation_gap(space, &genotype, 300 + i as u64).map_err(e2s)?;
        worst = worst.max(gap);
        ensure(gap <= 1e-9, || format!("genotype {i}: gap {gap:.3e}\n{}", genotype.to_json()))?;
    }
    Ok(format!("20 random genotypes, worst gap {worst:.2e}"))
}

// ---------------------------------------------------------------- 4

fn small_pipeline(seed: u64) -> (PipelineConfig, Dataset) {
    let data = generate(&SyntheticSpec {
        num_samples: 240,
        seed: 11,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.seed = seed;
    cfg.labeled_ratio = 0.2;
    cfg.search.epochs = 2;
    cfg.pretrain.epochs = 2;
    cfg.classifier.epochs = 30;
    (cfg, data)
}

fn criterion_4() -> Check {
    // Phase discipline on single steps.
    let data = generate(&SyntheticSpec {
        num_samples: 16,
        ..SyntheticSpec::default()
    })
    .map_err(e2s)?;
    let contrastive = ContrastiveConfig::default();
    let mut state = SearchState::new(&Default::default(), &contrastive, &SearchConfig::default(), 4).map_err(e2s)?;
    let idx: Vec<usize> = (0..8).collect();
    let views = build_views(&data, &idx, &contrastive, 4, &[0], Exec::Sequential).map_err(e2s)?;
    for _ in 0..3 {
        let arch_before = state.arch.clone();
        let w_before = state.weights.clone();
        state.weight_step(&views).map_err(e2s)?;
        ensure(state.arch == arch_before, || "train phase moved architecture logits".into())?;
        ensure(state.weights != w_before, || "train phase did not move weights".into())?;
        let arch_before = state.arch.clone();
        let w_before = state.weights.clone();
        state.arch_step(&views).map_err(e2s)?;
        ensure(state.weights == w_before, || "valid phase moved operator weights".into())?;
        ensure(state.arch != arch_before, || "valid phase did not move architecture logits".into())?;
    }

    // Two identical seeded full runs.
    let (cfg, data) = small_pipeline(7);
    let prov = Provenance::of(&cfg).map_err(e2s)?;
    let a = run_pipeline(&cfg, &data, PipelineInputs::default(), None, &prov, &mut NullSink).map_err(e2s)?;
    let b = run_pipeline(&cfg, &data, PipelineInputs::default(), None, &prov, &mut NullSink).map_err(e2s)?;
    let ha = a.genotype.as_ref().map(Genotype::hash);
    let hb = b.genotype.as_ref().map(Genotype::hash);
    ensure(ha.is_some() && ha == hb, || format!("genotype hashes {ha:?} vs {hb:?}"))?;
    let fa = a.weighted_f1.map(f64::to_bits);
    let fb = b.weighted_f1.map(f64::to_bits);
    ensure(fa.is_some() && fa == fb, || format!("final F1 {:?} vs {:?}", a.weighted_f1, b.weighted_f1))?;
    let metrics = |o: &mmnas::pipeline::PipelineOutcome| o.reports.iter().map(|r| r.metrics.clone()).collect::<Vec<_>>();
    ensure(metrics(&a) == metrics(&b), || "stage metrics differ between runs".into())?;
    Ok(format!(
        "3 train/valid step pairs frozen correctly; repeated run: genotype {} and F1 {:.4} identical",
        &ha.unwrap()[..12],
        a.weighted_f1.unwrap()
    ))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Check {
    let started = Instant::now();
    let seeds: Vec<u64> = (0..10).collect();
    let results = Exec::Parallel.map(&seeds, |&seed| -> mmnas::Result<bool> {
        let spec = SyntheticSpec { seed, ..SyntheticSpec::default() };
        let data = generate(&spec)?.without_labels();
        let n = data.len();
        let cut = n * 4 / 5;
        let idx: Vec<usize> = (0..n).collect();
        let train = data.subset(&idx[..cut], false);
        let valid = data.subset(&idx[cut..], false);
        let outcome = run_search(
            &SearchSpaceConfig::default(),
            &ContrastiveConfig::default(),
            &SearchConfig::default(),
            seed,
            &train,
            &valid,
            Exec::Sequential,
            &mut NullSink,
        )?;
        let selected = outcome.genotype.selected_features();
        Ok(spec.planted.iter().all(|p| selected.contains(p)))
    });
    let mut hits = 0;
    let mut flags = String::new();
    for r in results {
        let ok = r.map_err(e2s)?;
        hits += ok as usize;
        flags.push(if ok { '+' } else { '-' });
    }
    let elapsed = started.elapsed();
    let detail = format!("{hits}/10 seeds recover both planted layers [{flags}]; {:.0} s", elapsed.as_secs_f64());
    ensure(hits >= 8 && elapsed < Duration::from_secs(600), || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Check {
    let seeds: Vec<u64> = (0..5).collect();
    let results = Exec::Parallel.map(&seeds, |&seed| -> mmnas::Result<(f64, f64, f64)> {
        let data = generate(&SyntheticSpec { seed, ..SyntheticSpec::default() })?;
        let mut cfg = PipelineConfig::default();
        cfg.seed = seed;
        cfg.labeled_ratio = 0.05;
        cfg.exec = Exec::Sequential;
        let prov = Provenance::of(&cfg)?;
        let full = run_pipeline(&cfg, &data, PipelineInputs::default(), None, &prov, &mut NullSink)?;
        let zeros = full
            .reports
            .iter()
            .find(|r| r.stage == "eval")
            .and_then(|r| r.metrics.get("all_zero_weighted_f1").copied())
            .expect("eval report");

        let mut baseline = cfg.clone();
        baseline.stages = StageToggles { search: false, pretrain: true, fit: true };
        baseline.pretrain.epochs = 0;
        let inputs = PipelineInputs {
            genotype: full.genotype.clone(),
            weights: None,
        };
        let base = run_pipeline(&baseline, &data, inputs, None, &prov, &mut NullSink)?;
        Ok((full.weighted_f1.unwrap(), base.weighted_f1.unwrap(), zeros))
    });
    let rows = results.into_iter().collect::<mmnas::Result<Vec<_>>>().map_err(e2s)?;
    let n = rows.len();
    let wins_base = rows.iter().filter(|r| r.0 > r.1).count();
    let wins_zero = rows.iter().filter(|r| r.0 > r.2).count();
    let mean = |f: &dyn Fn(&(f64, f64, f64)) -> f64| rows.iter().map(f).sum::<f64>() / n as f64;
    let (m_full, m_base, m_zero) = (mean(&|r| r.0), mean(&|r| r.1), mean(&|r| r.2));
    let (p_base, p_zero) = (sign_test_p(wins_base, n), sign_test_p(wins_zero, n));
    let detail = format!(
        "mean F1 full {m_full:.4} / no-pretrain {m_base:.4} / all-zeros {m_zero:.4}; wins {wins_base}/{n} (p={p_base:.3}), {wins_zero}/{n} (p={p_zero:.3})"
    );
    ensure(m_full > m_base && m_full > m_zero && p_base < 0.05 && p_zero < 0.05, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Check {
    let mut rng = rng(7);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.random_range(1..40);
        let labels = rng.random_range(1..8);
        let density_p: f64 = rng.random_range(0.0..1.0);
        let density_t: f64 = rng.random_range(0.0..1.0);
        let draw = |rng: &mut ChaCha8Rng, p: f64| -> Vec<Vec<u8>> {
            (0..n).map(|_| (0..labels).map(|_| rng.random_bool(p) as u8).collect()).collect()
        };
        let truth = draw(&mut rng, density_t);
        let pred = draw(&mut rng, density_p);
        let got = weighted_f1(&pred, &truth).map_err(e2s)?;
        let want = weighted_f1_oracle(&pred, &truth);
        let diff = (got - want).abs();
        worst = worst.max(diff);
        ensure(diff <= 1e-12, || format!("case {case}: {got} vs oracle {want}"))?;
    }
    Ok(format!("1000 random instances, max diff {worst:.1e}"))
}

// ---------------------------------------------------------------- 8

fn bits(t: &[f64]) -> Vec<u64> {
    t.iter().map(|v| v.to_bits()).collect()
}

fn criterion_8() -> Check {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let data = generate(&SyntheticSpec {
        num_samples: 64,
        ..SyntheticSpec::default()
    })
    .map_err(e2s)?;
    let path = dir.path().join("d.mmnf");
    mmnf::write(&path, &data).map_err(e2s)?;
    let back = mmnf::read(&path).map_err(e2s)?;
    for (m, dims) in data.layout().iter().enumerate() {
        for l in 0..dims.len() {
            ensure(bits(data.block(m, l)) == bits(back.block(m, l)), || format!("MMNF block {m}:{l} differs"))?;
        }
    }
    ensure(back.labels() == data.labels() && back.ids() == data.ids(), || "MMNF labels or ids differ".into())?;

    let mut rng = rng(8);
    let mut store = ParamStore::new();
    for i in 0..6 {
        let shape: Vec<usize> = (0..rng.random_range(0..4)).map(|_| rng.random_range(1..5)).collect();
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| rng.random_range(-1e3..1e3) * 10f64.powi(rng.random_range(-200..200))).collect();
        store.add(format!("t{i}"), Tensor::new(shape, values).map_err(e2s)?).map_err(e2s)?;
    }
    let path = dir.path().join("w.mmnw");
    checkpoint::write(&path, &store).map_err(e2s)?;
    let loaded = checkpoint::read(&path).map_err(e2s)?;
    ensure(loaded.len() == store.len(), || "MMNW parameter count differs".into())?;
    for ((na, ta), (nb, tb)) in store.iter().zip(loaded.iter()) {
        ensure(na == nb && ta.shape() == tb.shape() && bits(ta.data()) == bits(tb.data()), || format!("MMNW {na} differs"))?;
    }

    for i in 0..50 {
        let space = if i % 2 == 0 { small_space() } else { SearchSpaceConfig::default() };
        let g = random_genotype(&space, &mut rng);
        let text = g.to_json();
        let parsed = Genotype::from_json(&text).map_err(e2s)?;
        ensure(parsed == g && parsed.to_json() == text, || format!("genotype {i} not stable:\n{text}"))?;
        let pretty = serde_json::to_string_pretty(&serde_json::from_str::<serde_json::Value>(&text).unwrap()).unwrap();
        let reparsed = Genotype::from_json(&pretty).map_err(e2s)?;
        ensure(reparsed.to_json() == text, || format!("genotype {i}: reformatted input not canonicalized"))?;
    }
    Ok("MMNF and MMNW bit-exact; 50 genotypes canonical under parse/serialize".into())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("1 gradient suite", criterion_1),
        ("2 NT-Xent oracle", criterion_2),
        ("3 relaxation consistency", criterion_3),
        ("4 phase discipline + determinism", criterion_4),
        ("5 planted-structure recovery", criterion_5),
        ("6 SSL benefit", criterion_6),
        ("7 metric oracle", criterion_7),
        ("8 format round-trips", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
