mod common;

use common::*;
use mmnas::autodiff::{check_gradients, Tape, Tensor};
use mmnas::contrastive::{
    augment_pair, build_views, mask_tokens, ntxent_loss, ContrastiveConfig, ImageAugConfig, ProjectionHead, TextAugConfig,
};
use mmnas::data::{generate, SyntheticSpec};
use mmnas::exec::Exec;
use mmnas::nn::{Bound, ParamStore};
use mmnas::Error;
use proptest::prelude::*;

fn loss(rows: &[Vec<f64>], tau: f64) -> f64 {
    let tape = Tape::new();
    let z = tape.constant(Tensor::from_rows(rows).unwrap());
    ntxent_loss(z, tau).unwrap().value().data()[0]
}

#[test]
fn single_pair_loss_is_exactly_zero() {
    assert_eq!(loss(&[vec![1.0, 2.0, -1.0], vec![-3.0, 0.5, 0.0]], 0.5), 0.0);
}

#[test]
fn orthogonal_pairs_hand_case() {
    let (a, b) = (vec![2.0, 0.0, 0.0], vec![0.0, 0.0, 3.0]);
    let l = loss(&[a.clone(), a, b.clone(), b], 1.0);
    assert!((l - 0.551_444_713_932_051).abs() < 1e-9, "{l}");
}

#[test]
fn loss_rejects_bad_inputs() {
    let tape = Tape::new();
    let odd = tape.constant(Tensor::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap());
    assert!(matches!(ntxent_loss(odd, 0.1), Err(Error::Shape { .. })));
    let zero_row = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap());
    assert!(matches!(ntxent_loss(zero_row, 0.1), Err(Error::ZeroNorm { row: 1 })));
    let ok = tape.constant(Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap());
    assert!(ntxent_loss(ok, 0.0).is_err());
    assert!(ntxent_loss(ok, -1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn loss_matches_naive_reference(
        rows in (1usize..5).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 2 * n)),
        tau in 0.05f64..2.0,
    ) {
        prop_assume!(rows.iter().all(|r| r.iter().any(|&v| v.abs() > 1e-3)));
        prop_assert!((loss(&rows, tau) - ntxent_naive(&rows, tau)).abs() < 1e-9);
    }

    #[test]
    fn loss_is_invariant_to_scale_and_pair_order(
        pairs in prop::collection::vec((prop::collection::vec(0.1f64..1.0, 3), prop::collection::vec(-1.0f64..-0.1, 3)), 2..5),
        scales in prop::collection::vec(0.1f64..10.0, 10),
        rotate in 0usize..5,
    ) {
        let rows: Vec<Vec<f64>> = pairs.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
        let base = loss(&rows, 0.3);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * 10.0).collect()).collect();
        prop_assert!((loss(&scaled, 0.3) - base).abs() < 1e-12);
        let per_row: Vec<Vec<f64>> = rows.iter().zip(&scales).map(|(r, s)| r.iter().map(|v| v * s).collect()).collect();
        prop_assert!((loss(&per_row, 0.3) - base).abs() < 1e-12);
        let mut reordered = pairs.clone();
        let k = rotate % reordered.len();
        reordered.rotate_left(k);
        let swapped: Vec<Vec<f64>> = reordered.iter().flat_map(|(a, b)| [b.clone(), a.clone()]).collect();
        prop_assert!((loss(&swapped, 0.3) - base).abs() < 1e-12);
    }
}

fn small_data() -> mmnas::data::Dataset {
    generate(&SyntheticSpec {
        num_samples: 6,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

#[test]
fn disabled_augmentation_returns_the_input() {
    let data = small_data();
    let cfg = ContrastiveConfig {
        image: ImageAugConfig::identity(),
        text: TextAugConfig {
            p_mask: 0.0,
            ..TextAugConfig::default()
        },
        ..ContrastiveConfig::default()
    };
    let pair = augment_pair(&data, 3, &cfg, 42, &[]).unwrap();
    for (m, dims) in data.layout().iter().enumerate() {
        for l in 0..dims.len() {
            assert_eq!(pair.view_i[m][l], data.row(m, l, 3));
            assert_eq!(pair.view_j[m][l], data.row(m, l, 3));
        }
    }
}

#[test]
fn near_certain_masking_masks_nearly_everything() {
    let cfg = TextAugConfig {
        p_mask: 0.999_999,
        ..TextAugConfig::default()
    };
    let tokens: Vec<u32> = (1..=10_000).collect();
    let masked = mask_tokens(&tokens, &cfg, &mut rng(1)).unwrap();
    let kept = masked.iter().filter(|&&t| t != cfg.mask_token).count();
    assert!(kept <= 5, "{kept} tokens survived");
}

#[test]
fn fixed_seed_views_replay_byte_identically() {
    let data = small_data();
    let cfg = ContrastiveConfig::default();
    let a = augment_pair(&data, 2, &cfg, 42, &[7]).unwrap();
    let b = augment_pair(&data, 2, &cfg, 42, &[7]).unwrap();
    let bits = |v: &Vec<Vec<Vec<f64>>>| v.iter().flatten().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.view_i), bits(&b.view_i));
    assert_eq!(bits(&a.view_j), bits(&b.view_j));
    assert_ne!(bits(&a.view_i), bits(&a.view_j));
    let c = augment_pair(&data, 2, &cfg, 43, &[7]).unwrap();
    assert_ne!(bits(&a.view_i), bits(&c.view_i));
}

#[test]
fn views_do_not_depend_on_batch_composition_or_threads() {
    let data = small_data();
    let cfg = ContrastiveConfig::default();
    let all = build_views(&data, &[0, 1, 2, 3], &cfg, 5, &[1], Exec::Parallel).unwrap();
    let part = build_views(&data, &[2, 3], &cfg, 5, &[1], Exec::Sequential).unwrap();
    for (m_all, m_part) in all.iter().zip(&part) {
        for (a, p) in m_all.iter().zip(m_part) {
            assert_eq!(&a.data()[a.cols() * 4..], p.data());
        }
    }
}

fn head(in_dim: usize, hidden: usize, out: usize) -> (ParamStore, ProjectionHead) {
    let mut store = ParamStore::new();
    let head = ProjectionHead::new(&mut store, "g", in_dim, hidden, out, &mut rng(3)).unwrap();
    (store, head)
}

#[test]
fn zero_head_maps_everything_to_zero() {
    let (mut store, head) = head(3, 4, 2);
    for id in store.ids().collect::<Vec<_>>() {
        let shape = store.get(id).shape().to_vec();
        *store.get_mut(id) = Tensor::zeros(&shape);
    }
    let tape = Tape::new();
    let z = head
        .forward(&store.bind(&tape, false), tape.constant(uniform(&mut rng(4), &[5, 3], -1.0, 1.0)))
        .unwrap();
    assert!(z.value().data().iter().all(|&v| v == 0.0));
}

#[test]
fn identity_head_passes_relu_of_input() {
    let (mut store, head) = head(3, 3, 3);
    let eye = Tensor::matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    for (name, value) in [("g1.w", eye.clone()), ("g2.w", eye), ("g1.b", Tensor::zeros(&[1, 3])), ("g2.b", Tensor::zeros(&[1, 3]))] {
        let id = store.id_of(name).unwrap();
        *store.get_mut(id) = value;
    }
    let h = uniform(&mut rng(5), &[4, 3], -1.0, 1.0);
    let tape = Tape::new();
    let z = head.forward(&store.bind(&tape, false), tape.constant(h.clone())).unwrap();
    assert_eq!(*z.value(), h.map(|v| v.max(0.0)));
}

#[test]
fn head_weight_gradients_match_finite_differences() {
    let mut r = rng(6);
    for case in 0..20 {
        let (store, head) = head(3, 5, 2);
        let h = uniform(&mut r, &[4, 3], -1.0, 1.0);
        let coord = (case % 4, case % 2);
        let weights: Vec<Tensor> = store.iter().map(|(_, t)| t.clone()).collect();
        let report = check_gradients(&weights, 1e-5, Exec::Sequential, |tape, v| {
            let params = Bound::from_vars(v.to_vec());
            let z = head.forward(&params, tape.constant(h.clone()))?;
            z.slice(0, coord.0, 1)?.slice(1, coord.1, 1)?.sum()
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "case {case}: {}", report.max_rel_error);
    }
}
