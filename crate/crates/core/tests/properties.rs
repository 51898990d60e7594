//! Invariants over randomly generated trees, inputs and matrices.

use arbo::generate::{
    generate_random_tree, random_input, rng_from_seed, GeneratorParams, LeafKind,
};
use arbo::inference::{
    first_argmax, predict_bitwise, predict_matrix, predict_ternary, ternary_scores,
    traversal_phase, weighted_sparsemax, Activation,
};
use arbo::io::{from_document_str, to_document_string, Model};
use arbo::tensorize::{compile, ternary_form, tuples_equivalent, Ordering};
use arbo::validate::decode_structure;
use arbo::{evaluate_classic, DecisionTree};
use proptest::prelude::*;

fn params(kind: u8) -> GeneratorParams {
    match kind % 4 {
        0 => GeneratorParams::default(),
        1 => GeneratorParams {
            integer_thresholds: true,
            ..GeneratorParams::default()
        },
        2 => GeneratorParams::mixed(),
        _ => GeneratorParams {
            composed_prob: 0.1,
            leaf_kind: LeafKind::Linear,
            ..GeneratorParams::mixed()
        },
    }
}

fn tree(seed: u64, leaves: usize, kind: u8) -> (DecisionTree, GeneratorParams) {
    let p = params(kind);
    (generate_random_tree(seed, leaves, 3, &p).unwrap(), p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backends_agree_with_classic(seed in any::<u64>(), leaves in 2usize..48, kind in any::<u8>()) {
        let (t, p) = tree(seed, leaves, kind);
        let tuple = compile(&t, Ordering::Bfs).unwrap();
        let tt = ternary_form(&tuple);
        let mut rng = rng_from_seed(seed);
        for _ in 0..20 {
            let x = random_input(&mut rng, t.schema(), &p);
            let want = evaluate_classic(&t, &x).unwrap();
            for got in [
                predict_matrix(&tuple, &x, &Activation::BinarizedRelu).unwrap(),
                predict_matrix(&tuple, &x, &Activation::RectifiedQuadratic).unwrap(),
                predict_bitwise(&tuple, &x).unwrap(),
                predict_ternary(&tt, &x).unwrap(),
            ] {
                prop_assert_eq!(got.leaf, want.leaf);
                prop_assert_eq!(got.value, want.value);
            }
        }
    }

    #[test]
    fn ternary_scores_are_sharp(seed in any::<u64>(), leaves in 2usize..48, kind in any::<u8>()) {
        let (t, p) = tree(seed, leaves, kind);
        let tt = ternary_form(&compile(&t, Ordering::Bfs).unwrap());
        let mut rng = rng_from_seed(!seed);
        for _ in 0..10 {
            let x = random_input(&mut rng, t.schema(), &p);
            let leaf = evaluate_classic(&t, &x).unwrap().leaf;
            let scores = ternary_scores(&tt, &x).unwrap();
            prop_assert_eq!(scores[leaf], 1.0);
            for (i, (&s, &norm)) in scores.iter().zip(tt.norms()).enumerate() {
                if i != leaf {
                    prop_assert!(s <= 1.0 - 2.0 / f64::from(norm) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn decode_recovers_shape(seed in any::<u64>(), leaves in 2usize..80, preorder in any::<bool>()) {
        let (t, _) = tree(seed, leaves, 0);
        let ordering = if preorder { Ordering::Preorder } else { Ordering::Bfs };
        let tuple = compile(&t, ordering).unwrap();
        let skeleton = decode_structure(tuple.bits()).unwrap();
        prop_assert_eq!(skeleton.shape(), t.shape());
        let orders = if preorder { skeleton.columns_preorder() } else { skeleton.columns_bfs() };
        prop_assert_eq!(orders, (0..tuple.n_internal()).collect::<Vec<_>>());
    }

    #[test]
    fn orderings_are_equivalent(seed in any::<u64>(), leaves in 2usize..40, kind in any::<u8>()) {
        let (t, _) = tree(seed, leaves, kind);
        let a = compile(&t, Ordering::Bfs).unwrap();
        let b = compile(&t, Ordering::Preorder).unwrap();
        prop_assert!(tuples_equivalent(&a, &b).is_equivalent());
    }

    #[test]
    fn documents_reload_identically(seed in any::<u64>(), leaves in 2usize..24, kind in any::<u8>()) {
        let (t, _) = tree(seed, leaves, kind);
        let models = [Model::Tree(t.clone()), Model::Tuple(compile(&t, Ordering::Bfs).unwrap())];
        for model in models {
            let text = to_document_string(&model).unwrap();
            let back = from_document_str(&text).unwrap();
            prop_assert_eq!(to_document_string(&back).unwrap(), text);
        }
    }

    #[test]
    fn first_argmax_of_sum_is_first_row_covering_the_false_set(
        seed in any::<u64>(),
        leaves in 2usize..64,
        alpha in proptest::collection::vec(0.01f64..100.0, 63),
        h in proptest::collection::vec(prop_oneof![Just(0.0), 0.001f64..50.0], 63),
    ) {
        let (t, _) = tree(seed, leaves, 0);
        let b = compile(&t, Ordering::Bfs).unwrap().bits().clone();
        let n = b.cols();
        let h = &h[..n];
        let covering = (0..b.rows())
            .find(|&i| (0..n).all(|j| h[j] == 0.0 || b.get(i, j) == 1))
            .unwrap();
        prop_assert_eq!(first_argmax(&traversal_phase(&b, h).unwrap()).unwrap(), covering);
        let scaled: Vec<f64> = h.iter().zip(&alpha).map(|(v, a)| v * a).collect();
        prop_assert_eq!(first_argmax(&traversal_phase(&b, &scaled).unwrap()).unwrap(), covering);
    }

    #[test]
    fn sparsemax_lands_on_the_simplex(
        z in proptest::collection::vec(-10.0f64..10.0, 1..16),
        steps in proptest::collection::vec(0.01f64..1.0, 16),
    ) {
        // Strictly decreasing positive weights from cumulative steps.
        let total: f64 = steps[..z.len()].iter().sum();
        let w: Vec<f64> = (0..z.len()).map(|i| 0.01 + total - steps[..i].iter().sum::<f64>()).collect();
        let p = weighted_sparsemax(&z, &w).unwrap();
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}
