//! Node-based binary decision trees and classic recursive traversal.
//!
//! Every other backend in the crate is checked against [`evaluate_classic`].
//! A test that holds sends the sample to the LEFT child, a failed test to the
//! RIGHT child. Margins are signed so that `margin > 0` means the test failed
//! (a "false node"); a margin of exactly zero counts as passed.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{predict_matrix, Activation};
use crate::schema::{FeatureSchema, FeatureVector};
use crate::tensorize::TreeTuple;

pub type NodeId = usize;

/// Split predicate of an internal node.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `x[feature] <= threshold`
    Axis { feature: usize, threshold: f64 },
    /// `x[feature] in accepted`, over category ids.
    Categorical {
        feature: usize,
        accepted: BTreeSet<u32>,
    },
    /// `weights . x - offset <= 0`, over all numeric features.
    Oblique { weights: Vec<f64>, offset: f64 },
    /// `model(x) - threshold <= 0`, where `model` is a compiled regression tree
    /// reading the same features. Stacks trees as feature transforms.
    Composed {
        model: Arc<TreeTuple>,
        threshold: f64,
    },
}

impl TestFunction {
    /// Signed margin of this test on `x`. Positive means the test failed.
    pub fn margin(&self, x: &FeatureVector) -> Result<f64> {
        match self {
            TestFunction::Axis { feature, threshold } => {
                let v = x
                    .numeric
                    .get(*feature)
                    .ok_or_else(|| Error::Schema(format!("unknown numeric feature {feature}")))?;
                Ok(v - threshold)
            }
            TestFunction::Categorical { feature, accepted } => {
                let id = x.categorical.get(*feature).ok_or_else(|| {
                    Error::Schema(format!("unknown categorical feature {feature}"))
                })?;
                Ok(if accepted.contains(id) { -1.0 } else { 1.0 })
            }
            TestFunction::Oblique { weights, offset } => {
                if weights.len() != x.numeric.len() {
                    return Err(Error::Schema(format!(
                        "oblique test has {} weights for {} numeric features",
                        weights.len(),
                        x.numeric.len()
                    )));
                }
                Ok(dot(weights, &x.numeric) - offset)
            }
            TestFunction::Composed { model, threshold } => {
                let inner = predict_matrix(model, x, &Activation::BinarizedRelu)?;
                match inner.value {
                    LeafValue::Real(v) => Ok(v - threshold),
                    LeafValue::Class(_) => Err(Error::Unsupported(
                        "composed test needs a model with numeric leaves".into(),
                    )),
                }
            }
        }
    }

    /// Checks every feature reference against `schema`.
    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        match self {
            TestFunction::Axis { feature, threshold } => {
                if *feature >= schema.n_numeric() {
                    return Err(Error::Schema(format!(
                        "axis test references numeric feature {feature}, schema has {}",
                        schema.n_numeric()
                    )));
                }
                if !threshold.is_finite() {
                    return Err(Error::Input("axis threshold must be finite".into()));
                }
            }
            TestFunction::Categorical { feature, accepted } => {
                let size = schema.vocabulary_size(*feature).ok_or_else(|| {
                    Error::Schema(format!(
                        "categorical test references feature {feature}, schema has {}",
                        schema.n_categorical()
                    ))
                })?;
                if let Some(&id) = accepted.iter().find(|&&id| id as usize >= size) {
                    return Err(Error::Schema(format!(
                        "category id {id} outside vocabulary of size {size}"
                    )));
                }
            }
            TestFunction::Oblique { weights, offset } => {
                if weights.len() != schema.n_numeric() {
                    return Err(Error::Schema(format!(
                        "oblique test has {} weights, schema has {} numeric features",
                        weights.len(),
                        schema.n_numeric()
                    )));
                }
                if !offset.is_finite() || weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Input("oblique weights must be finite".into()));
                }
            }
            TestFunction::Composed { model, threshold } => {
                if model.schema() != schema {
                    return Err(Error::Schema(
                        "composed model reads a different feature schema".into(),
                    ));
                }
                if !model.is_regression() {
                    return Err(Error::Unsupported(
                        "composed test needs a model with numeric leaves".into(),
                    ));
                }
                if !threshold.is_finite() {
                    return Err(Error::Input("composed threshold must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn is_axis(&self) -> bool {
        matches!(self, TestFunction::Axis { .. })
    }
}

/// Output of a leaf: a real number (regression) or a class id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafValue {
    Real(f64),
    Class(u32),
}

impl LeafValue {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            LeafValue::Real(v) => Some(*v),
            LeafValue::Class(_) => None,
        }
    }
}

impl std::fmt::Display for LeafValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LeafValue::Real(v) => write!(f, "{v}"),
            LeafValue::Class(c) => write!(f, "class:{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeafModel {
    Constant(LeafValue),
    /// `weights . x + offset` over the numeric features; regression only.
    Linear {
        weights: Vec<f64>,
        offset: f64,
    },
}

impl LeafModel {
    pub fn real(v: f64) -> Self {
        LeafModel::Constant(LeafValue::Real(v))
    }

    pub fn class(c: u32) -> Self {
        LeafModel::Constant(LeafValue::Class(c))
    }

    pub fn evaluate(&self, x: &FeatureVector) -> Result<LeafValue> {
        match self {
            LeafModel::Constant(v) => Ok(*v),
            LeafModel::Linear { weights, offset } => {
                if weights.len() != x.numeric.len() {
                    return Err(Error::Schema(format!(
                        "linear leaf has {} weights for {} numeric features",
                        weights.len(),
                        x.numeric.len()
                    )));
                }
                Ok(LeafValue::Real(dot(weights, &x.numeric) + offset))
            }
        }
    }

    pub fn is_class(&self) -> bool {
        matches!(self, LeafModel::Constant(LeafValue::Class(_)))
    }

    fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        match self {
            LeafModel::Constant(LeafValue::Real(v)) if !v.is_finite() => {
                Err(Error::Input("leaf value must be finite".into()))
            }
            LeafModel::Linear { weights, offset } => {
                if weights.len() != schema.n_numeric() {
                    return Err(Error::Schema(format!(
                        "linear leaf has {} weights, schema has {} numeric features",
                        weights.len(),
                        schema.n_numeric()
                    )));
                }
                if !offset.is_finite() || weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Input("linear leaf weights must be finite".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Checks that leaves are homogeneous: all class labels, or all numeric.
pub(crate) fn check_leaf_kinds<'a>(models: impl IntoIterator<Item = &'a LeafModel>) -> Result<()> {
    let mut kinds = models.into_iter().map(LeafModel::is_class);
    if let Some(first) = kinds.next() {
        if kinds.any(|k| k != first) {
            return Err(Error::Input(
                "mixed leaf types: class labels and numeric leaves in one tree".into(),
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        test: TestFunction,
        left: NodeId,
        right: NodeId,
    },
    Leaf {
        model: LeafModel,
    },
}

/// Ordered shape of a full binary tree, without tests or values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Shape {
    Leaf,
    Split(Box<Shape>, Box<Shape>),
}

impl Shape {
    pub fn split(left: Shape, right: Shape) -> Shape {
        Shape::Split(Box::new(left), Box::new(right))
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            Shape::Leaf => 1,
            Shape::Split(l, r) => l.n_leaves() + r.n_leaves(),
        }
    }
}

/// Immutable full binary decision tree.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    root: NodeId,
    n_internal: usize,
    n_leaves: usize,
    schema: FeatureSchema,
    /// Left-to-right rank of each leaf node; `usize::MAX` for internal nodes.
    leaf_rank: Vec<usize>,
    depth: usize,
}

/// One test taken during classic traversal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStep {
    pub node: NodeId,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafOutcome {
    /// Left-to-right position of the reached leaf, starting at 0.
    pub leaf: usize,
    pub node: NodeId,
    pub value: LeafValue,
    pub path: Vec<PathStep>,
}

impl DecisionTree {
    pub fn single_leaf(model: LeafModel, schema: FeatureSchema) -> Result<Self> {
        let mut b = TreeBuilder::new();
        let root = b.leaf(model);
        b.build(root, schema)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn n_internal(&self) -> usize {
        self.n_internal
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn is_classification(&self) -> bool {
        self.leaves_in_order()
            .first()
            .map(|&id| matches!(&self.nodes[id], Node::Leaf { model } if model.is_class()))
            .unwrap_or(false)
    }

    /// Left-to-right rank of a leaf node.
    pub fn leaf_index(&self, id: NodeId) -> Option<usize> {
        self.leaf_rank.get(id).copied().filter(|&r| r != usize::MAX)
    }

    /// Leaf node ids, left to right.
    pub fn leaves_in_order(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.n_leaves);
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            match &self.nodes[id] {
                Node::Leaf { .. } => out.push(id),
                Node::Internal { left, right, .. } => {
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        out
    }

    pub fn shape(&self) -> Shape {
        self.shape_of(self.root)
    }

    fn shape_of(&self, id: NodeId) -> Shape {
        match &self.nodes[id] {
            Node::Leaf { .. } => Shape::Leaf,
            Node::Internal { left, right, .. } => {
                Shape::split(self.shape_of(*left), self.shape_of(*right))
            }
        }
    }

    /// Number of node levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.depth
    }

    fn compute_depth(nodes: &[Node], root: NodeId) -> usize {
        let mut best = 0;
        let mut stack = vec![(root, 1usize)];
        while let Some((id, d)) = stack.pop() {
            match &nodes[id] {
                Node::Leaf { .. } => best = best.max(d),
                Node::Internal { left, right, .. } => {
                    stack.push((*left, d + 1));
                    stack.push((*right, d + 1));
                }
            }
        }
        best
    }

    /// Copy of this tree in which the subtree at `node` is replaced by its
    /// leftmost leaf.
    pub fn collapse(&self, node: NodeId) -> Result<DecisionTree> {
        let mut b = TreeBuilder::new();
        let root = self.copy_into(&mut b, self.root, node);
        b.build(root, self.schema.clone())
    }

    fn copy_into(&self, b: &mut TreeBuilder, id: NodeId, collapse: NodeId) -> NodeId {
        match &self.nodes[id] {
            Node::Leaf { model } => b.leaf(model.clone()),
            Node::Internal { left, .. } if id == collapse => {
                let mut cur = *left;
                while let Node::Internal { left, .. } = &self.nodes[cur] {
                    cur = *left;
                }
                self.copy_into(b, cur, collapse)
            }
            Node::Internal { test, left, right } => {
                let l = self.copy_into(b, *left, collapse);
                let r = self.copy_into(b, *right, collapse);
                b.split(test.clone(), l, r)
            }
        }
    }
}

/// Arena builder for [`DecisionTree`].
#[derive(Debug, Default)]
pub struct TreeBuilder {
    nodes: Vec<Node>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn leaf(&mut self, model: LeafModel) -> NodeId {
        self.nodes.push(Node::Leaf { model });
        self.nodes.len() - 1
    }

    pub fn split(&mut self, test: TestFunction, left: NodeId, right: NodeId) -> NodeId {
        self.nodes.push(Node::Internal { test, left, right });
        self.nodes.len() - 1
    }

    pub fn build(self, root: NodeId, schema: FeatureSchema) -> Result<DecisionTree> {
        DecisionTree::from_nodes(self.nodes, root, schema)
    }
}

impl DecisionTree {
    /// Validates a node pool: full binary, single root, acyclic, all nodes
    /// reachable, tests and leaves consistent with `schema`.
    pub fn from_nodes(nodes: Vec<Node>, root: NodeId, schema: FeatureSchema) -> Result<Self> {
        if root >= nodes.len() {
            return Err(Error::Input(format!("root {root} out of range")));
        }
        let mut parents = vec![0usize; nodes.len()];
        for (id, node) in nodes.iter().enumerate() {
            match node {
                Node::Internal { test, left, right } => {
                    for &c in [left, right] {
                        if c >= nodes.len() {
                            return Err(Error::Input(format!(
                                "node {id} references missing child {c}"
                            )));
                        }
                        parents[c] += 1;
                    }
                    if left == right {
                        return Err(Error::Input(format!("node {id} has identical children")));
                    }
                    test.check_schema(&schema)?;
                }
                Node::Leaf { model } => model.check_schema(&schema)?,
            }
        }
        if parents[root] != 0 {
            return Err(Error::Input("root has a parent".into()));
        }
        if let Some(id) = (0..nodes.len()).find(|&id| id != root && parents[id] != 1) {
            return Err(Error::Input(format!(
                "node {id} has {} parents; expected exactly one",
                parents[id]
            )));
        }

        let mut leaf_rank = vec![usize::MAX; nodes.len()];
        let mut visited = 0usize;
        let mut n_leaves = 0usize;
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            visited += 1;
            if visited > nodes.len() {
                return Err(Error::Input("cycle in node graph".into()));
            }
            match &nodes[id] {
                Node::Leaf { .. } => {
                    leaf_rank[id] = n_leaves;
                    n_leaves += 1;
                }
                Node::Internal { left, right, .. } => {
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        if visited != nodes.len() {
            return Err(Error::Input(format!(
                "{} nodes unreachable from root",
                nodes.len() - visited
            )));
        }
        check_leaf_kinds(nodes.iter().filter_map(|n| match n {
            Node::Leaf { model } => Some(model),
            Node::Internal { .. } => None,
        }))?;
        let n_internal = nodes.len() - n_leaves;
        debug_assert_eq!(n_leaves, n_internal + 1);
        let depth = Self::compute_depth(&nodes, root);
        Ok(DecisionTree {
            nodes,
            root,
            n_internal,
            n_leaves,
            schema,
            leaf_rank,
            depth,
        })
    }
}

/// Classic root-to-leaf traversal: passed tests go left, failed tests right.
pub fn evaluate_classic(tree: &DecisionTree, x: &FeatureVector) -> Result<LeafOutcome> {
    tree.schema.check(x)?;
    let mut path = Vec::with_capacity(tree.depth());
    let mut id = tree.root;
    loop {
        match &tree.nodes[id] {
            Node::Leaf { model } => {
                return Ok(LeafOutcome {
                    leaf: tree.leaf_rank[id],
                    node: id,
                    value: model.evaluate(x)?,
                    path,
                });
            }
            Node::Internal { test, left, right } => {
                let passed = test.margin(x)? <= 0.0;
                path.push(PathStep { node: id, passed });
                id = if passed { *left } else { *right };
            }
        }
    }
}

/// Leaf rank and model reached by classic traversal, without recording the
/// path or checking the schema.
#[inline]
pub(crate) fn classic_leaf<'t>(
    tree: &'t DecisionTree,
    x: &FeatureVector,
) -> Result<(usize, &'t LeafModel)> {
    let mut id = tree.root;
    loop {
        match &tree.nodes[id] {
            Node::Leaf { model } => return Ok((tree.leaf_rank[id], model)),
            Node::Internal { test, left, right } => {
                id = if test.margin(x)? <= 0.0 {
                    *left
                } else {
                    *right
                };
            }
        }
    }
}

/// Node levels on the longest root-to-leaf path.
pub fn tree_depth(tree: &DecisionTree) -> usize {
    tree.depth()
}

/// Sequential dot product. Every backend computes linear margins through this
/// one routine so that their rounding is identical.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::figure_one_tree;

    #[test]
    fn figure_one_reaches_fifth_leaf() {
        let tree = figure_one_tree();
        let out =
            evaluate_classic(&tree, &FeatureVector::numeric(vec![2.0, 1.0, 2.0, 2.0])).unwrap();
        assert_eq!(out.leaf, 4);
        assert_eq!(out.value, LeafValue::Real(50.0));
        assert_eq!(out.path.len(), 2);
        assert!(!out.path[0].passed);
        assert!(out.path[1].passed);
    }

    #[test]
    fn figure_one_without_false_nodes_reaches_leftmost_leaf() {
        let tree = figure_one_tree();
        let out =
            evaluate_classic(&tree, &FeatureVector::numeric(vec![1.0, 1.0, 2.0, 3.0])).unwrap();
        assert_eq!(out.leaf, 0);
        assert_eq!(out.value, LeafValue::Real(10.0));
        assert!(out.path.iter().all(|s| s.passed));
    }

    #[test]
    fn single_leaf_tree() {
        let t = DecisionTree::single_leaf(LeafModel::real(3.0), FeatureSchema::numeric(2)).unwrap();
        let out = evaluate_classic(&t, &FeatureVector::numeric(vec![0.0, 0.0])).unwrap();
        assert_eq!(out.leaf, 0);
        assert!(out.path.is_empty());
        assert_eq!(t.depth(), 1);
        assert_eq!(t.n_internal(), 0);
    }

    #[test]
    fn depths() {
        assert_eq!(figure_one_tree().depth(), 5);
        let mut b = TreeBuilder::new();
        let mut cur = b.leaf(LeafModel::real(0.0));
        for i in 0..3 {
            let r = b.leaf(LeafModel::real(i as f64 + 1.0));
            cur = b.split(
                TestFunction::Axis {
                    feature: 0,
                    threshold: i as f64,
                },
                cur,
                r,
            );
        }
        let chain = b.build(cur, FeatureSchema::numeric(1)).unwrap();
        assert_eq!(chain.depth(), 4);
        assert_eq!(chain.n_leaves(), chain.n_internal() + 1);
    }

    #[test]
    fn schema_mismatch_is_input_error() {
        let tree = figure_one_tree();
        let err = evaluate_classic(&tree, &FeatureVector::numeric(vec![1.0])).unwrap_err();
        assert!(err.is_input_error());
    }

    #[test]
    fn tie_at_threshold_passes() {
        let t = TestFunction::Oblique {
            weights: vec![1.0, 1.0, 0.0, 0.0],
            offset: 3.0,
        };
        assert_eq!(
            t.margin(&FeatureVector::numeric(vec![2.0, 1.0, 2.0, 2.0]))
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn builder_rejects_bad_pools() {
        let mut b = TreeBuilder::new();
        let l = b.leaf(LeafModel::real(1.0));
        let r = b.leaf(LeafModel::class(1));
        let root = b.split(
            TestFunction::Axis {
                feature: 0,
                threshold: 0.0,
            },
            l,
            r,
        );
        assert!(b.build(root, FeatureSchema::numeric(1)).is_err());

        // Shared child.
        let nodes = vec![
            Node::Leaf {
                model: LeafModel::real(1.0),
            },
            Node::Internal {
                test: TestFunction::Axis {
                    feature: 0,
                    threshold: 0.0,
                },
                left: 0,
                right: 0,
            },
        ];
        assert!(DecisionTree::from_nodes(nodes, 1, FeatureSchema::numeric(1)).is_err());

        // Feature out of range.
        let mut b = TreeBuilder::new();
        let l = b.leaf(LeafModel::real(1.0));
        let r = b.leaf(LeafModel::real(2.0));
        let root = b.split(
            TestFunction::Axis {
                feature: 3,
                threshold: 0.0,
            },
            l,
            r,
        );
        assert!(b.build(root, FeatureSchema::numeric(1)).is_err());
    }

    #[test]
    fn collapse_replaces_subtree_with_leftmost_leaf() {
        let tree = figure_one_tree();
        // Node ids follow the fixture builder; collapse the root's left child.
        let left_child = match tree.node(tree.root()) {
            Node::Internal { left, .. } => *left,
            Node::Leaf { .. } => unreachable!(),
        };
        let small = tree.collapse(left_child).unwrap();
        assert_eq!(small.n_leaves(), 3);
        let out =
            evaluate_classic(&small, &FeatureVector::numeric(vec![0.0, 9.0, 0.0, 0.0])).unwrap();
        assert_eq!(out.value, LeafValue::Real(10.0));
    }
}
