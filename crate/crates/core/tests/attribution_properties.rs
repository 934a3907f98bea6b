//! Attribution properties checked against independent oracles.

use kaap_core::kaap::{kaap_map, kaap_maps_prefix, kp_value, modality_importance, KaapOptions};
use kaap_core::oracle::{exact_shapley, reference_kaap, reference_modality_importance};
use kaap_core::toy::{random_sample, AdditiveModel, OutputMode, SampleDims, TableGame, TableGameModel, ValueFunction};
use kaap_core::{Modality, ModalityMask, Predictor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shapley value by averaging marginal contributions over every ordering,
/// written independently of the bitmask formula.
fn permutation_shapley(game: &TableGame) -> Vec<f64> {
    let n = game.n_players();
    let mut perms: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..n {
        perms = perms
            .into_iter()
            .flat_map(|p| {
                (0..n)
                    .filter(|i| !p.contains(i))
                    .map(|i| [p.clone(), vec![i]].concat())
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    let mut phi = vec![0.0; n];
    for p in &perms {
        let mut coalition = 0u32;
        for &i in p {
            let before = game.value(coalition);
            coalition |= 1 << i;
            phi[i] += game.value(coalition) - before;
        }
    }
    phi.iter().map(|v| v / perms.len() as f64).collect()
}

#[test]
fn shapley_matches_permutation_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 1..=5 {
        for _ in 0..20 {
            let g = TableGame::random(&mut rng, n).unwrap();
            let exact = exact_shapley(&g).unwrap().values;
            for (a, b) in exact.iter().zip(permutation_shapley(&g)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn shapley_axioms() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 1..=6 {
        for _ in 0..25 {
            let g = TableGame::random(&mut rng, n).unwrap();
            let h = TableGame::random(&mut rng, n).unwrap();
            let r = exact_shapley(&g).unwrap();
            // Efficiency.
            let total: f64 = r.values.iter().sum();
            assert!((total - (r.full - r.empty)).abs() < 1e-12);
            // Additivity.
            let sum = TableGame::new(g.values().iter().zip(h.values()).map(|(a, b)| a + b).collect()).unwrap();
            let rs = exact_shapley(&sum).unwrap().values;
            let rh = exact_shapley(&h).unwrap().values;
            for i in 0..n {
                assert!((rs[i] - r.values[i] - rh[i]).abs() < 1e-12);
            }
            // Null player: make player 0 contribute nothing.
            let null = TableGame::from_fn(n, |s| g.value(s & !1)).unwrap();
            assert!(exact_shapley(&null).unwrap().values[0].abs() < 1e-12);
            // Symmetry: a game depending only on coalition size.
            let sizes: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sym = TableGame::from_fn(n, |s| sizes[s.count_ones() as usize]).unwrap();
            let v = exact_shapley(&sym).unwrap().values;
            assert!(v.iter().all(|x| (x - v[0]).abs() < 1e-12));
        }
    }
}

#[test]
fn two_player_kp_is_shapley() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let g = TableGame::random(&mut rng, 2).unwrap();
        let phi = exact_shapley(&g).unwrap().values;
        for i in 0..2 {
            let me = 1u32 << i;
            let kp = kp_value(g.value(me) - g.value(0), g.value(3) - g.value(3 & !me), 2).unwrap();
            worst = worst.max((kp - phi[i]).abs());
        }
    }
    assert!(worst < 1e-12, "{worst:e}");
}

#[test]
fn table_game_model_reproduces_game_under_masks() {
    let game = TableGame::majority3();
    let model = TableGameModel::new(game.clone(), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sample = random_sample(&mut rng, &SampleDims::default()).unwrap();
    while sample.text().iter().all(|&t| t == 0) {
        sample = random_sample(&mut rng, &SampleDims::default()).unwrap();
    }
    for bits in 0..8u8 {
        let p = model.predict_masked(&sample, ModalityMask::from_bits(bits)).unwrap();
        assert_eq!(p.get(2), game.value(bits as u32));
        assert!([0, 1, 3].iter().all(|&c| p.get(c) == 0.0));
    }
}

#[test]
fn additive_importance_equals_contributions() {
    let dims = SampleDims::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let model = AdditiveModel::random(&mut rng, &dims, 0.3, OutputMode::Raw).unwrap();
        let sample = random_sample(&mut rng, &dims).unwrap();
        let target = rng.gen_range(0..4);
        let imp = modality_importance(&model, &sample, target).unwrap();
        for m in Modality::ALL {
            let expected = model.contribution(&sample, m)[target];
            assert!((imp.get(m) - expected).abs() < 1e-9, "{m}");
        }
        let p_f = model.predict(&sample).unwrap().get(target);
        let p_b = model.predict_masked(&sample, ModalityMask::NONE).unwrap().get(target);
        assert!((imp.sum() - (p_f - p_b)).abs() < 1e-9);
    }
}

#[test]
fn optimized_engine_matches_reference() {
    let dims = SampleDims::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..15 {
        let model = AdditiveModel::random(&mut rng, &dims, 0.5, OutputMode::Probability).unwrap();
        let sample = random_sample(&mut rng, &dims).unwrap();
        let target = rng.gen_range(0..4);
        for m in Modality::ALL {
            let k = rng.gen_range(2..=5);
            let fast = kaap_map(&model, &sample, m, k, target).unwrap();
            let slow = reference_kaap(&model, &sample, m, k, target).unwrap();
            assert_eq!(fast.shape, slow.shape);
            assert_eq!(fast.normalized, slow.normalized);
            for (a, b) in fast.values.iter().zip(&slow.values) {
                assert!((a - b).abs() <= 1e-12, "{m} k={k}: {a} vs {b}");
            }
        }
        let a = modality_importance(&model, &sample, target).unwrap();
        let b = reference_modality_importance(&model, &sample, target).unwrap();
        for m in Modality::ALL {
            assert!((a.get(m) - b.get(m)).abs() <= 1e-12);
        }
    }
}

#[test]
fn prefix_maps_match_single_maps() {
    let dims = SampleDims::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = AdditiveModel::random(&mut rng, &dims, 0.5, OutputMode::Probability).unwrap();
    let sample = random_sample(&mut rng, &dims).unwrap();
    for m in Modality::ALL {
        let maps = kaap_maps_prefix(&model, &sample, m, 5, 1, KaapOptions::default()).unwrap();
        assert_eq!(maps.len(), 4);
        for (i, map) in maps.iter().enumerate() {
            assert_eq!(map, &kaap_map(&model, &sample, m, i + 2, 1).unwrap());
        }
    }
}

#[test]
fn normalized_maps_sum_to_one() {
    let dims = SampleDims::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut seen = 0;
    for _ in 0..20 {
        let model = AdditiveModel::random(&mut rng, &dims, 0.5, OutputMode::Probability).unwrap();
        let sample = random_sample(&mut rng, &dims).unwrap();
        for m in Modality::ALL {
            let map = kaap_map(&model, &sample, m, 4, 0).unwrap();
            if map.normalized {
                seen += 1;
                assert!((map.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            } else {
                assert_eq!(map.values, map.raw_values);
            }
        }
    }
    assert!(seen > 0);
}

#[test]
fn probability_outputs_are_distributions() {
    let dims = SampleDims {
        image: [4, 4, 3],
        speech: [4, 4],
        text_len: 4,
        vocab: 8,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = AdditiveModel::random(&mut rng, &dims, 3.0, OutputMode::Probability).unwrap();
    for _ in 0..10_000 {
        let s = random_sample(&mut rng, &dims).unwrap();
        let p = model.predict(&s).unwrap();
        assert!(p.is_distribution(1e-9));
        assert_eq!(p, model.predict_masked(&s, ModalityMask::ALL).unwrap());
    }
}
