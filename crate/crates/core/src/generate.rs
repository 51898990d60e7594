//! Seeded random trees and inputs for fuzzing.
//!
//! Shapes grow by splitting a uniformly chosen leaf, which covers chains as
//! well as balanced trees.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{FeatureDef, FeatureKind, FeatureSchema, FeatureVector};
use crate::tensorize::{compile, Ordering};
use crate::tree::{DecisionTree, LeafModel, NodeId, TestFunction, TreeBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeafKind {
    Real,
    Class { n_classes: u32 },
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Thresholds (and numeric inputs) are drawn from this range.
    pub threshold_range: (f64, f64),
    pub n_categorical: usize,
    pub vocab_size: usize,
    pub oblique_prob: f64,
    pub categorical_prob: f64,
    pub composed_prob: f64,
    pub leaf_kind: LeafKind,
    /// Round thresholds and numeric inputs to integers so that inputs land
    /// exactly on thresholds.
    pub integer_thresholds: bool,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            threshold_range: (0.0, 10.0),
            n_categorical: 0,
            vocab_size: 4,
            oblique_prob: 0.0,
            categorical_prob: 0.0,
            composed_prob: 0.0,
            leaf_kind: LeafKind::Real,
            integer_thresholds: false,
        }
    }
}

impl GeneratorParams {
    /// Axis, oblique and categorical tests mixed, real leaves.
    pub fn mixed() -> Self {
        GeneratorParams {
            n_categorical: 2,
            vocab_size: 5,
            oblique_prob: 0.25,
            categorical_prob: 0.2,
            ..Self::default()
        }
    }

    /// Schema of generated trees: `n_features` numeric features `f1..`
    /// followed by the categorical ones `c1..`.
    pub fn schema(&self, n_features: usize) -> FeatureSchema {
        let mut defs: Vec<FeatureDef> = (1..=n_features)
            .map(|i| FeatureDef {
                name: format!("f{i}"),
                kind: FeatureKind::Numeric,
            })
            .collect();
        defs.extend((1..=self.n_categorical).map(|i| FeatureDef {
            name: format!("c{i}"),
            kind: FeatureKind::Categorical {
                vocabulary: (0..self.vocab_size).map(|v| format!("v{v}")).collect(),
            },
        }));
        FeatureSchema::new(defs).expect("generated names are distinct")
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

enum Slot {
    Leaf,
    Split(usize, usize),
}

fn random_shape(rng: &mut impl Rng, n_leaves: usize) -> Vec<Slot> {
    let mut slots = vec![Slot::Leaf];
    let mut leaves = vec![0usize];
    while leaves.len() < n_leaves {
        let k = rng.random_range(0..leaves.len());
        let at = leaves.swap_remove(k);
        let (l, r) = (slots.len(), slots.len() + 1);
        slots.push(Slot::Leaf);
        slots.push(Slot::Leaf);
        slots[at] = Slot::Split(l, r);
        leaves.push(l);
        leaves.push(r);
    }
    slots
}

fn draw_threshold(rng: &mut impl Rng, params: &GeneratorParams) -> f64 {
    let (lo, hi) = params.threshold_range;
    let t = if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    };
    if params.integer_thresholds {
        t.round()
    } else {
        t
    }
}

fn draw_leaf(rng: &mut impl Rng, params: &GeneratorParams, n_features: usize) -> LeafModel {
    match params.leaf_kind {
        LeafKind::Real => LeafModel::real(rng.random_range(-10.0..10.0)),
        LeafKind::Class { n_classes } => LeafModel::class(rng.random_range(0..n_classes.max(1))),
        LeafKind::Linear => LeafModel::Linear {
            weights: (0..n_features)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
            offset: rng.random_range(-10.0..10.0),
        },
    }
}

fn draw_test(
    rng: &mut impl Rng,
    params: &GeneratorParams,
    schema: &FeatureSchema,
    n_features: usize,
) -> Result<TestFunction> {
    let u: f64 = rng.random();
    let cat = if params.n_categorical > 0 && params.vocab_size > 0 {
        params.categorical_prob
    } else {
        0.0
    };
    if u < cat {
        let feature = rng.random_range(0..params.n_categorical);
        let ids: Vec<u32> = (0..params.vocab_size as u32).collect();
        let k = rng.random_range(1..=params.vocab_size);
        let accepted: BTreeSet<u32> = ids.choose_multiple(rng, k).copied().collect();
        return Ok(TestFunction::Categorical { feature, accepted });
    }
    if n_features == 0 {
        return Err(Error::Config(
            "need numeric features when categorical tests are disabled".into(),
        ));
    }
    if u < cat + params.composed_prob {
        let inner_params = GeneratorParams {
            oblique_prob: 0.0,
            categorical_prob: 0.0,
            composed_prob: 0.0,
            leaf_kind: LeafKind::Real,
            ..params.clone()
        };
        let inner_leaves = rng.random_range(2..=4);
        let inner = build(rng, inner_leaves, n_features, &inner_params, schema.clone())?;
        let model = compile(&inner, Ordering::Bfs)?;
        return Ok(TestFunction::Composed {
            model: Arc::new(model),
            threshold: rng.random_range(-10.0..10.0),
        });
    }
    if u < cat + params.composed_prob + params.oblique_prob {
        let weights = (0..n_features)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        return Ok(TestFunction::Oblique {
            weights,
            offset: draw_threshold(rng, params),
        });
    }
    Ok(TestFunction::Axis {
        feature: rng.random_range(0..n_features),
        threshold: draw_threshold(rng, params),
    })
}

fn build(
    rng: &mut impl Rng,
    n_leaves: usize,
    n_features: usize,
    params: &GeneratorParams,
    schema: FeatureSchema,
) -> Result<DecisionTree> {
    let slots = random_shape(rng, n_leaves);
    let mut b = TreeBuilder::new();
    let root = emit(rng, &slots, 0, &mut b, params, &schema, n_features)?;
    b.build(root, schema)
}

fn emit(
    rng: &mut impl Rng,
    slots: &[Slot],
    at: usize,
    b: &mut TreeBuilder,
    params: &GeneratorParams,
    schema: &FeatureSchema,
    n_features: usize,
) -> Result<NodeId> {
    match slots[at] {
        Slot::Leaf => Ok(b.leaf(draw_leaf(rng, params, n_features))),
        Slot::Split(l, r) => {
            let test = draw_test(rng, params, schema, n_features)?;
            let left = emit(rng, slots, l, b, params, schema, n_features)?;
            let right = emit(rng, slots, r, b, params, schema, n_features)?;
            Ok(b.split(test, left, right))
        }
    }
}

/// Random full binary tree with `n_leaves` leaves over `n_features` numeric
/// features (plus `params.n_categorical` categorical ones).
pub fn generate_random_tree(
    seed: u64,
    n_leaves: usize,
    n_features: usize,
    params: &GeneratorParams,
) -> Result<DecisionTree> {
    if n_leaves == 0 {
        return Err(Error::Input("a tree needs at least one leaf".into()));
    }
    let mut rng = rng_from_seed(seed);
    build(
        &mut rng,
        n_leaves,
        n_features,
        params,
        params.schema(n_features),
    )
}

/// Random input conforming to `schema`, numeric values drawn slightly wider
/// than the threshold range.
pub fn random_input(
    rng: &mut impl Rng,
    schema: &FeatureSchema,
    params: &GeneratorParams,
) -> FeatureVector {
    let (lo, hi) = params.threshold_range;
    let pad = 0.1 * (hi - lo).abs() + 1.0;
    let numeric = (0..schema.n_numeric())
        .map(|_| {
            let v = rng.random_range(lo - pad..hi + pad);
            if params.integer_thresholds {
                v.round()
            } else {
                v
            }
        })
        .collect();
    let categorical = (0..schema.n_categorical())
        .map(|k| {
            let size = schema.vocabulary_size(k).unwrap_or(1).max(1);
            rng.random_range(0..size as u32)
        })
        .collect();
    FeatureVector::new(numeric, categorical)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_counts_and_determinism() {
        let p = GeneratorParams::default();
        let single = generate_random_tree(7, 1, 4, &p).unwrap();
        assert_eq!(single.n_internal(), 0);
        let t = generate_random_tree(7, 6, 4, &p).unwrap();
        assert_eq!(t.n_leaves(), 6);
        assert_eq!(t.n_internal(), 5);
        assert_eq!(t, generate_random_tree(7, 6, 4, &p).unwrap());
        assert!(generate_random_tree(7, 0, 4, &p).is_err());
    }

    #[test]
    fn thresholds_respect_the_range() {
        let p = GeneratorParams {
            threshold_range: (2.0, 3.0),
            ..GeneratorParams::default()
        };
        let t = generate_random_tree(3, 30, 2, &p).unwrap();
        for node in t.nodes() {
            if let crate::tree::Node::Internal {
                test: TestFunction::Axis { threshold, .. },
                ..
            } = node
            {
                assert!((2.0..3.0).contains(threshold));
            }
        }
    }

    #[test]
    fn mixed_tests_appear() {
        let p = GeneratorParams {
            composed_prob: 0.1,
            ..GeneratorParams::mixed()
        };
        let t = generate_random_tree(11, 64, 3, &p).unwrap();
        let mut kinds = BTreeSet::new();
        for node in t.nodes() {
            if let crate::tree::Node::Internal { test, .. } = node {
                kinds.insert(match test {
                    TestFunction::Axis { .. } => 0,
                    TestFunction::Categorical { .. } => 1,
                    TestFunction::Oblique { .. } => 2,
                    TestFunction::Composed { .. } => 3,
                });
            }
        }
        assert_eq!(kinds.len(), 4);
        let mut rng = rng_from_seed(1);
        let x = random_input(&mut rng, t.schema(), &p);
        t.schema().check(&x).unwrap();
    }
}
