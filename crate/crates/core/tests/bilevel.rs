use mmnas::bilevel::{run_search, search_epoch, SearchConfig, SearchState};
use mmnas::contrastive::ContrastiveConfig;
use mmnas::data::{generate, Dataset, SyntheticSpec};
use mmnas::exec::Exec;
use mmnas::report::{MemorySink, NullSink, Phase, BUILD_ID};
use mmnas::searchspace::{softmax, SearchSpaceConfig};
use mmnas::Error;

fn splits(n: usize, seed: u64) -> (Dataset, Dataset) {
    let data = generate(&SyntheticSpec {
        num_samples: 2 * n,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
    .without_labels();
    let idx: Vec<usize> = (0..2 * n).collect();
    (data.subset(&idx[..n], false), data.subset(&idx[n..], false))
}

fn config(epochs: usize) -> SearchConfig {
    SearchConfig {
        epochs,
        batch_size: 4,
        eval_batch_size: 8,
        ..SearchConfig::default()
    }
}

fn state(cfg: &SearchConfig, seed: u64) -> SearchState {
    SearchState::new(&SearchSpaceConfig::default(), &ContrastiveConfig::default(), cfg, seed).unwrap()
}

#[test]
fn zero_learning_rates_leave_everything_unchanged() {
    let mut cfg = config(2);
    cfg.weights.lr = 0.0;
    cfg.arch.lr = 0.0;
    let (train, valid) = splits(8, 1);
    let mut s = state(&cfg, 1);
    let (w0, a0) = (s.weights.clone(), s.arch.clone());
    let mut sink = MemorySink::default();
    for _ in 0..2 {
        search_epoch(&mut s, &train, &valid, Exec::Sequential, &mut sink).unwrap();
    }
    assert_eq!(s.weights, w0);
    assert_eq!(s.arch, a0);
    assert_eq!(s.history.len(), 2);
    assert_eq!(sink.records.len(), 6);
    assert!(s.history.iter().all(|m| m.train_loss.is_finite() && m.eval_loss.is_finite()));
}

#[test]
fn one_epoch_replays_identically() {
    let (train, valid) = splits(8, 2);
    let run = || {
        let mut s = state(&config(1), 2);
        search_epoch(&mut s, &train, &valid, Exec::Parallel, &mut NullSink).unwrap();
        let m = &s.history[0];
        (m.train_loss.to_bits(), m.valid_loss.to_bits(), m.eval_loss.to_bits(), s.arch.clone(), s.weights.clone())
    };
    assert_eq!(run(), run());
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let (train, valid) = splits(8, 3);
    let run = |exec| {
        let out = run_search(&SearchSpaceConfig::default(), &ContrastiveConfig::default(), &config(2), 3, &train, &valid, exec, &mut NullSink).unwrap();
        (out.genotype.hash(), out.state.best_loss.to_bits(), out.state.weights)
    };
    assert_eq!(run(Exec::Sequential), run(Exec::Parallel));
}

#[test]
fn single_epoch_checkpoints_that_epoch() {
    let (train, valid) = splits(8, 4);
    let out = run_search(&SearchSpaceConfig::default(), &ContrastiveConfig::default(), &config(1), 4, &train, &valid, Exec::Sequential, &mut NullSink).unwrap();
    assert_eq!(out.state.best_epoch, Some(1));
    assert_eq!(out.state.best_arch, out.state.arch);
    assert_eq!(out.state.best_loss, out.state.history[0].eval_loss);
}

#[test]
fn shuffled_order_changes_trajectory_but_alpha_stays_a_distribution() {
    let (train, valid) = splits(12, 5);
    let perm: Vec<usize> = (0..12).rev().collect();
    let shuffled = train.subset(&perm, false);
    let trajectory = |data: &Dataset| {
        let mut s = state(&config(3), 5);
        let mut losses = Vec::new();
        for _ in 0..3 {
            let m = search_epoch(&mut s, data, &valid, Exec::Sequential, &mut NullSink).unwrap();
            losses.push(m.train_loss);
            for c in 0..2 {
                let total: f64 = softmax(s.arch.alpha(c)).iter().sum();
                assert!((total - 1.0).abs() <= 1e-12);
            }
        }
        losses
    };
    assert_ne!(trajectory(&train), trajectory(&shuffled));
}

#[test]
fn records_carry_provenance_and_phases_in_order() {
    let (train, valid) = splits(8, 6);
    let mut s = state(&config(1), 6);
    let mut sink = MemorySink::default();
    search_epoch(&mut s, &train, &valid, Exec::Sequential, &mut sink).unwrap();
    let phases: Vec<Phase> = sink.records.iter().map(|r| r.phase).collect();
    assert_eq!(phases, vec![Phase::Train, Phase::Valid, Phase::Eval]);
    assert_eq!(sink.records[0].best_so_far, None);
    assert_eq!(sink.records[2].best_so_far, Some(s.best_loss));
    for r in &sink.records {
        assert_eq!(r.config_hash, s.config_hash);
        assert_eq!(r.build_id, BUILD_ID);
        assert_eq!(r.stage, "search");
    }
}

#[test]
fn splits_below_one_pair_are_rejected() {
    let (train, valid) = splits(8, 7);
    let tiny = valid.subset(&[0], false);
    let mut s = state(&config(1), 7);
    assert!(matches!(search_epoch(&mut s, &train, &tiny, Exec::Sequential, &mut NullSink), Err(Error::TooSmall(_))));
    let empty = valid.subset(&[], false);
    assert!(matches!(search_epoch(&mut s, &empty, &valid, Exec::Sequential, &mut NullSink), Err(Error::TooSmall(_))));
}
