//! Sum of products of step functions.
//!
//! An axis-aligned regression tree with constant leaves equals
//! `sum_m a_m * prod_k H(s_km * (x[v_km] - t_km))`, one term per leaf. A
//! passed test `x <= t` contributes sense `-1`, a failed one sense `+1`, and
//! `H(z) = 1` only for `z > 0`, so inputs lying exactly on a threshold
//! select no term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::FeatureVector;
use crate::tree::{DecisionTree, LeafModel, LeafValue, Node, NodeId, TestFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    /// `+1` or `-1`.
    pub sense: i8,
    pub feature: usize,
    pub threshold: f64,
}

impl Factor {
    /// Step function value of this factor on `x`.
    pub fn evaluate(&self, x: &FeatureVector) -> f64 {
        let z = f64::from(self.sense) * (x.numeric[self.feature] - self.threshold);
        if z > 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coefficient: f64,
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn evaluate(&self, x: &FeatureVector) -> f64 {
        self.factors.iter().map(|f| f.evaluate(x)).product()
    }
}

/// One term per leaf, left to right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumProductForm {
    pub n_features: usize,
    pub terms: Vec<Term>,
}

/// Expands an axis-aligned regression tree with constant leaves.
pub fn sum_product_form(tree: &DecisionTree) -> Result<SumProductForm> {
    let mut terms = Vec::with_capacity(tree.n_leaves());
    let mut path = Vec::new();
    expand(tree, tree.root(), &mut path, &mut terms)?;
    Ok(SumProductForm {
        n_features: tree.schema().n_numeric(),
        terms,
    })
}

fn expand(
    tree: &DecisionTree,
    id: NodeId,
    path: &mut Vec<Factor>,
    out: &mut Vec<Term>,
) -> Result<()> {
    match tree.node(id) {
        Node::Leaf { model } => match model {
            LeafModel::Constant(LeafValue::Real(a)) => {
                out.push(Term {
                    coefficient: *a,
                    factors: path.clone(),
                });
                Ok(())
            }
            _ => Err(Error::Unsupported(
                "sum-product form needs constant numeric leaves".into(),
            )),
        },
        Node::Internal { test, left, right } => {
            let TestFunction::Axis { feature, threshold } = test else {
                return Err(Error::Unsupported(
                    "sum-product form needs axis-aligned numeric tests".into(),
                ));
            };
            for (sense, child) in [(-1, *left), (1, *right)] {
                path.push(Factor {
                    sense,
                    feature: *feature,
                    threshold: *threshold,
                });
                expand(tree, child, path, out)?;
                path.pop();
            }
            Ok(())
        }
    }
}

impl SumProductForm {
    /// `sum_m a_m * prod_k H(...)`.
    pub fn evaluate(&self, x: &FeatureVector) -> Result<f64> {
        if x.numeric.len() != self.n_features {
            return Err(Error::Schema(format!(
                "input has {} numeric features, form expects {}",
                x.numeric.len(),
                self.n_features
            )));
        }
        Ok(self
            .terms
            .iter()
            .map(|t| t.coefficient * t.evaluate(x))
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::figure_one_tree;
    use crate::schema::FeatureSchema;
    use crate::tree::TreeBuilder;

    #[test]
    fn one_split_has_two_indicator_terms() {
        let mut b = TreeBuilder::new();
        let l = b.leaf(LeafModel::real(3.0));
        let r = b.leaf(LeafModel::real(7.0));
        let root = b.split(
            TestFunction::Axis {
                feature: 0,
                threshold: 0.0,
            },
            l,
            r,
        );
        let tree = b.build(root, FeatureSchema::numeric(1)).unwrap();
        let f = sum_product_form(&tree).unwrap();
        let factor = |sense| Factor {
            sense,
            feature: 0,
            threshold: 0.0,
        };
        assert_eq!(
            f.terms,
            vec![
                Term {
                    coefficient: 3.0,
                    factors: vec![factor(-1)]
                },
                Term {
                    coefficient: 7.0,
                    factors: vec![factor(1)]
                },
            ]
        );
        assert_eq!(
            f.evaluate(&FeatureVector::numeric(vec![-0.5])).unwrap(),
            3.0
        );
        assert_eq!(f.evaluate(&FeatureVector::numeric(vec![0.5])).unwrap(), 7.0);
    }

    #[test]
    fn figure_one_factor_counts_follow_path_lengths() {
        let f = sum_product_form(&figure_one_tree()).unwrap();
        let counts: Vec<_> = f.terms.iter().map(|t| t.factors.len()).collect();
        assert_eq!(counts, vec![3, 4, 4, 2, 2, 2]);
        assert_eq!(
            f.evaluate(&FeatureVector::numeric(vec![2.0, 1.0, 2.0, 2.0]))
                .unwrap(),
            50.0
        );
    }

    #[test]
    fn class_leaves_are_unsupported() {
        let mut b = TreeBuilder::new();
        let l = b.leaf(LeafModel::class(0));
        let r = b.leaf(LeafModel::class(1));
        let root = b.split(
            TestFunction::Axis {
                feature: 0,
                threshold: 0.0,
            },
            l,
            r,
        );
        let tree = b.build(root, FeatureSchema::numeric(1)).unwrap();
        assert!(matches!(
            sum_product_form(&tree),
            Err(Error::Unsupported(_))
        ));
    }
}
