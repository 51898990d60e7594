//! Additive and voting ensembles of compiled trees, batch scoring and the
//! backend benchmark.

pub mod bench;
mod scorer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bench::{run_bench, BenchEntry, BenchReport};
pub use scorer::{EnsembleScorer, ScorerOptions};

use crate::error::{Error, Result};
use crate::schema::{Dataset, FeatureSchema, FeatureVector};
use crate::tensorize::TreeTuple;
use crate::tree::{check_leaf_kinds, LeafValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// `sum_k w_k * tree_k(x)`.
    Sum,
    /// Plurality over class labels, lowest class id on ties.
    Vote,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Sum => "sum",
            Aggregation::Vote => "vote",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Classic,
    Matrix,
    Bitwise,
    Ternary,
    SumProduct,
    Soft,
}

impl Backend {
    pub const ALL: [Backend; 6] = [
        Backend::Classic,
        Backend::Matrix,
        Backend::Bitwise,
        Backend::Ternary,
        Backend::SumProduct,
        Backend::Soft,
    ];

    /// Whether the backend selects a single leaf per tree.
    pub fn is_hard(self) -> bool {
        !matches!(self, Backend::Soft | Backend::SumProduct)
    }

    pub fn name(self) -> &'static str {
        match self {
            Backend::Classic => "classic",
            Backend::Matrix => "matrix",
            Backend::Bitwise => "bitwise",
            Backend::Ternary => "ternary",
            Backend::SumProduct => "sumproduct",
            Backend::Soft => "soft",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Backend::ALL
            .into_iter()
            .find(|b| b.name() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown backend `{s}` (expected one of classic, matrix, bitwise, ternary, sumproduct, soft)"
                ))
            })
    }
}

/// Ordered list of compiled trees sharing one feature schema.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    schema: FeatureSchema,
    trees: Vec<TreeTuple>,
    weights: Vec<f64>,
    aggregation: Aggregation,
}

impl EnsembleModel {
    /// Checks that every tree reads `schema`, that weights match the trees,
    /// and that leaf kinds fit the aggregation.
    pub fn new(
        schema: FeatureSchema,
        trees: Vec<TreeTuple>,
        weights: Vec<f64>,
        aggregation: Aggregation,
    ) -> Result<Self> {
        if weights.len() != trees.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} trees",
                weights.len(),
                trees.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Input("tree weights must be finite".into()));
        }
        if let Some(k) = trees.iter().position(|t| t.schema() != &schema) {
            return Err(Error::Schema(format!(
                "tree {k} reads a different feature schema"
            )));
        }
        check_leaf_kinds(trees.iter().flat_map(|t| t.values()))?;
        match aggregation {
            Aggregation::Vote => {
                if trees.is_empty() {
                    return Err(Error::Input("vote ensemble needs at least one tree".into()));
                }
                if trees.iter().any(|t| t.is_regression()) {
                    return Err(Error::Input(
                        "vote ensembles need class-label leaves".into(),
                    ));
                }
            }
            Aggregation::Sum => {
                if trees.iter().any(|t| !t.is_regression()) {
                    return Err(Error::Input("sum ensembles need numeric leaves".into()));
                }
            }
        }
        Ok(EnsembleModel {
            schema,
            trees,
            weights,
            aggregation,
        })
    }

    /// Sum ensemble with unit weights.
    pub fn sum(schema: FeatureSchema, trees: Vec<TreeTuple>) -> Result<Self> {
        let weights = vec![1.0; trees.len()];
        Self::new(schema, trees, weights, Aggregation::Sum)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn trees(&self) -> &[TreeTuple] {
        &self.trees
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn total_leaves(&self) -> usize {
        self.trees.iter().map(TreeTuple::n_leaves).sum()
    }
}

/// Score of one input: the aggregated value and, for hard backends, the
/// leaf selected in each tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleOutput {
    pub value: LeafValue,
    pub leaves: Option<Vec<usize>>,
}

/// Combines per-tree outputs in tree order.
pub(crate) fn aggregate(model: &EnsembleModel, outputs: &[LeafValue]) -> LeafValue {
    match model.aggregation {
        Aggregation::Sum => {
            let mut acc = 0.0;
            for (w, v) in model.weights.iter().zip(outputs) {
                acc += w * v.as_real().expect("sum ensembles have numeric leaves");
            }
            LeafValue::Real(acc)
        }
        Aggregation::Vote => {
            let mut counts: Vec<u32> = Vec::new();
            for v in outputs {
                let LeafValue::Class(c) = v else {
                    unreachable!("vote ensembles have class leaves")
                };
                let c = *c as usize;
                if counts.len() <= c {
                    counts.resize(c + 1, 0);
                }
                counts[c] += 1;
            }
            let mut best = 0;
            for (c, &n) in counts.iter().enumerate() {
                if n > counts[best] {
                    best = c;
                }
            }
            LeafValue::Class(best as u32)
        }
    }
}

/// Scores one input. Builds a fresh [`EnsembleScorer`]; reuse a scorer for
/// repeated calls.
pub fn score_ensemble(
    model: &EnsembleModel,
    x: &FeatureVector,
    backend: Backend,
) -> Result<LeafValue> {
    let scorer = EnsembleScorer::new(model, backend, ScorerOptions::default())?;
    Ok(scorer.score(x)?.value)
}

/// Scores every row of `dataset` with `workers` threads. Rows are split into
/// contiguous chunks, so the output does not depend on the worker count.
pub fn score_batch(
    model: &EnsembleModel,
    dataset: &Dataset,
    backend: Backend,
    workers: usize,
) -> Result<Vec<EnsembleOutput>> {
    if dataset.schema != model.schema {
        return Err(Error::Schema(
            "dataset schema differs from the model's".into(),
        ));
    }
    let scorer = EnsembleScorer::new(model, backend, ScorerOptions::default())?;
    scorer.score_rows(&dataset.rows, workers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::figure_one_tree;
    use crate::tensorize::{compile, Ordering};
    use crate::tree::{LeafModel, TestFunction, TreeBuilder};

    fn one_split(left: LeafModel, right: LeafModel) -> TreeTuple {
        let mut b = TreeBuilder::new();
        let l = b.leaf(left);
        let r = b.leaf(right);
        let root = b.split(
            TestFunction::Axis {
                feature: 0,
                threshold: 0.0,
            },
            l,
            r,
        );
        compile(
            &b.build(root, FeatureSchema::numeric(1)).unwrap(),
            Ordering::Bfs,
        )
        .unwrap()
    }

    #[test]
    fn additivity() {
        let t = one_split(LeafModel::real(3.0), LeafModel::real(7.0));
        let m = EnsembleModel::sum(FeatureSchema::numeric(1), vec![t.clone(), t]).unwrap();
        let x = FeatureVector::numeric(vec![-1.0]);
        for backend in Backend::ALL.into_iter().filter(|b| *b != Backend::Soft) {
            assert_eq!(
                score_ensemble(&m, &x, backend).unwrap(),
                LeafValue::Real(6.0),
                "{backend}"
            );
        }
    }

    #[test]
    fn empty_sum_is_zero() {
        let m = EnsembleModel::sum(FeatureSchema::numeric(3), vec![]).unwrap();
        let x = FeatureVector::numeric(vec![0.0; 3]);
        assert_eq!(
            score_ensemble(&m, &x, Backend::Matrix).unwrap(),
            LeafValue::Real(0.0)
        );
        assert!(
            EnsembleModel::new(FeatureSchema::numeric(3), vec![], vec![], Aggregation::Vote)
                .is_err()
        );
    }

    #[test]
    fn vote_breaks_ties_toward_the_lowest_class() {
        let a = one_split(LeafModel::class(2), LeafModel::class(0));
        let b = one_split(LeafModel::class(1), LeafModel::class(0));
        let m = EnsembleModel::new(
            FeatureSchema::numeric(1),
            vec![a.clone(), b, a],
            vec![1.0; 3],
            Aggregation::Vote,
        )
        .unwrap();
        let below = FeatureVector::numeric(vec![-1.0]);
        let above = FeatureVector::numeric(vec![1.0]);
        assert_eq!(
            score_ensemble(&m, &below, Backend::Bitwise).unwrap(),
            LeafValue::Class(2)
        );
        assert_eq!(
            score_ensemble(&m, &above, Backend::Classic).unwrap(),
            LeafValue::Class(0)
        );

        let c = one_split(LeafModel::class(3), LeafModel::class(0));
        let d = one_split(LeafModel::class(1), LeafModel::class(0));
        let tie = EnsembleModel::new(
            FeatureSchema::numeric(1),
            vec![c, d],
            vec![1.0; 2],
            Aggregation::Vote,
        )
        .unwrap();
        assert_eq!(
            score_ensemble(&tie, &below, Backend::Matrix).unwrap(),
            LeafValue::Class(1)
        );
    }

    #[test]
    fn mixed_leaf_types_are_rejected() {
        let r = one_split(LeafModel::real(3.0), LeafModel::real(7.0));
        let c = one_split(LeafModel::class(1), LeafModel::class(0));
        assert!(EnsembleModel::sum(FeatureSchema::numeric(1), vec![r, c]).is_err());
    }

    #[test]
    fn weights_scale_the_sum() {
        let fig = compile(&figure_one_tree(), Ordering::Bfs).unwrap();
        let m = EnsembleModel::new(
            FeatureSchema::numeric(4),
            vec![fig.clone(), fig],
            vec![0.5, 2.0],
            Aggregation::Sum,
        )
        .unwrap();
        let x = FeatureVector::numeric(vec![2.0, 1.0, 2.0, 2.0]);
        assert_eq!(
            score_ensemble(&m, &x, Backend::Ternary).unwrap(),
            LeafValue::Real(125.0)
        );
    }
}
