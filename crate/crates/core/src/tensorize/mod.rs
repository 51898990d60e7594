//! Compilation of node trees into the `(S, t, B, v)` tuple and derived forms.
//!
//! Row `j` of the selection matrix `S` and entry `j` of the threshold vector
//! `t` describe internal node `j`; column `j` of the bitvector matrix `B`
//! holds a 0 for every leaf in that node's left subtree and a 1 elsewhere.
//! Leaves (rows of `B`, entries of `v`) are always ordered left to right.
//! Internal nodes follow the requested [`Ordering`].

mod sum_product;
mod ternary;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

pub use sum_product::{sum_product_form, Factor, SumProductForm, Term};
pub use ternary::{ternary_form, TernaryTuple};

pub use crate::bits::complement;
pub use crate::validate::{decode_structure, Skeleton};

use crate::bits::{BitMatrix, PackedBits};
use crate::error::{Error, Result};
use crate::schema::FeatureSchema;
use crate::tree::{
    check_leaf_kinds, DecisionTree, LeafModel, Node, NodeId, TestFunction, TreeBuilder,
};
use crate::validate::check_four_rules;

/// Order in which internal nodes are assigned columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    /// Level by level, left to right.
    #[default]
    Bfs,
    Preorder,
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ordering::Bfs => "bfs",
            Ordering::Preorder => "preorder",
        })
    }
}

impl FromStr for Ordering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bfs" => Ok(Ordering::Bfs),
            "preorder" => Ok(Ordering::Preorder),
            other => Err(Error::Config(format!(
                "unknown ordering `{other}` (expected bfs or preorder)"
            ))),
        }
    }
}

/// Matrix parameterization `(S, t, B, v)` of a decision tree.
///
/// Internal nodes whose test is not a linear function of the numeric
/// features (categorical and composed tests) keep a zero row in `S` and
/// store the test in the test bank instead.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeTuple {
    schema: FeatureSchema,
    selection: Array2<f64>,
    thresholds: Vec<f64>,
    bits: BitMatrix,
    values: Vec<LeafModel>,
    internal_order: Vec<NodeId>,
    leaf_order: Vec<NodeId>,
    test_bank: Vec<Option<TestFunction>>,
    packed: Vec<PackedBits>,
}

/// Raw parts of a [`TreeTuple`], as stored in a model document.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleParts {
    pub schema: FeatureSchema,
    pub selection: Array2<f64>,
    pub thresholds: Vec<f64>,
    pub bits: BitMatrix,
    pub values: Vec<LeafModel>,
    pub internal_order: Vec<NodeId>,
    pub leaf_order: Vec<NodeId>,
    pub test_bank: Vec<Option<TestFunction>>,
}

impl TreeTuple {
    /// Assembles a tuple and checks it: consistent dimensions, a valid
    /// structure matrix, tests and leaf models that match the schema.
    pub fn from_parts(parts: TupleParts) -> Result<Self> {
        let n_internal = parts.thresholds.len();
        let n_features = parts.schema.n_numeric();
        if parts.selection.dim() != (n_internal, n_features) {
            return Err(Error::Dimension(format!(
                "selection matrix is {:?}, expected ({n_internal}, {n_features})",
                parts.selection.dim()
            )));
        }
        if parts.bits.cols() != n_internal || parts.bits.rows() != parts.values.len() {
            return Err(Error::Dimension(format!(
                "bitvector matrix is {} x {}, expected {} x {n_internal}",
                parts.bits.rows(),
                parts.bits.cols(),
                parts.values.len()
            )));
        }
        if parts.test_bank.len() != n_internal
            || parts.internal_order.len() != n_internal
            || parts.leaf_order.len() != parts.values.len()
        {
            return Err(Error::Dimension(
                "test bank and node orders must match the matrix dimensions".into(),
            ));
        }
        let report = check_four_rules(&parts.bits)?;
        if !report.valid {
            return Err(Error::InvalidStructure(report.violations));
        }
        for (j, test) in parts.test_bank.iter().enumerate() {
            match test {
                Some(t) => t.check_schema(&parts.schema)?,
                None => {
                    if !parts.thresholds[j].is_finite()
                        || parts.selection.row(j).iter().any(|v| !v.is_finite())
                    {
                        return Err(Error::Input(format!("row {j} of S or t is not finite")));
                    }
                }
            }
        }
        for m in &parts.values {
            if let LeafModel::Linear { weights, .. } = m {
                if weights.len() != n_features {
                    return Err(Error::Schema(format!(
                        "linear leaf has {} weights, schema has {n_features} numeric features",
                        weights.len()
                    )));
                }
            }
        }
        check_leaf_kinds(&parts.values)?;
        Ok(Self::assemble(parts))
    }

    fn assemble(parts: TupleParts) -> Self {
        let packed = parts.bits.packed_columns();
        TreeTuple {
            schema: parts.schema,
            selection: parts.selection,
            thresholds: parts.thresholds,
            bits: parts.bits,
            values: parts.values,
            internal_order: parts.internal_order,
            leaf_order: parts.leaf_order,
            test_bank: parts.test_bank,
            packed,
        }
    }

    pub fn into_parts(self) -> TupleParts {
        TupleParts {
            schema: self.schema,
            selection: self.selection,
            thresholds: self.thresholds,
            bits: self.bits,
            values: self.values,
            internal_order: self.internal_order,
            leaf_order: self.leaf_order,
            test_bank: self.test_bank,
        }
    }

    /// Copy with one bit of `B` flipped and no validation. Used to inject
    /// faults when exercising the self-check and benchmark guards.
    pub fn with_flipped_bit(&self, row: usize, col: usize) -> TreeTuple {
        let mut parts = self.clone().into_parts();
        parts.bits = parts
            .bits
            .with_flipped(row % parts.bits.rows(), col % parts.bits.cols());
        Self::assemble(parts)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn selection(&self) -> &Array2<f64> {
        &self.selection
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn bits(&self) -> &BitMatrix {
        &self.bits
    }

    pub fn values(&self) -> &[LeafModel] {
        &self.values
    }

    pub fn internal_order(&self) -> &[NodeId] {
        &self.internal_order
    }

    pub fn leaf_order(&self) -> &[NodeId] {
        &self.leaf_order
    }

    pub fn test_bank(&self) -> &[Option<TestFunction>] {
        &self.test_bank
    }

    pub(crate) fn packed_columns(&self) -> &[PackedBits] {
        &self.packed
    }

    /// Number of internal nodes (columns of `B`).
    pub fn n_internal(&self) -> usize {
        self.thresholds.len()
    }

    /// Number of leaves (rows of `B`).
    pub fn n_leaves(&self) -> usize {
        self.values.len()
    }

    pub fn is_regression(&self) -> bool {
        !self.values.iter().any(LeafModel::is_class)
    }

    pub fn selection_row(&self, j: usize) -> ArrayView1<'_, f64> {
        self.selection.row(j)
    }

    /// Rebuilds the node tree this tuple encodes.
    ///
    /// One-hot rows of `S` become axis tests, other rows oblique tests.
    pub fn to_tree(&self) -> Result<DecisionTree> {
        let skeleton = decode_structure(&self.bits)?;
        let mut b = TreeBuilder::new();
        let root = self.rebuild(&skeleton, &mut b);
        b.build(root, self.schema.clone())
    }

    fn rebuild(&self, sk: &Skeleton, b: &mut TreeBuilder) -> NodeId {
        match sk {
            Skeleton::Leaf { row } => b.leaf(self.values[*row].clone()),
            Skeleton::Split {
                column,
                left,
                right,
            } => {
                let l = self.rebuild(left, b);
                let r = self.rebuild(right, b);
                b.split(self.column_test(*column), l, r)
            }
        }
    }

    /// The test of internal node `j` as a [`TestFunction`].
    pub fn column_test(&self, j: usize) -> TestFunction {
        if let Some(t) = &self.test_bank[j] {
            return t.clone();
        }
        let row = self.selection.row(j);
        let nonzero: Vec<usize> = (0..row.len()).filter(|&k| row[k] != 0.0).collect();
        match nonzero.as_slice() {
            [k] if row[*k] == 1.0 => TestFunction::Axis {
                feature: *k,
                threshold: self.thresholds[j],
            },
            _ => TestFunction::Oblique {
                weights: row.to_vec(),
                offset: self.thresholds[j],
            },
        }
    }
}

/// Compiles `tree` into its matrix parameterization.
pub fn compile(tree: &DecisionTree, ordering: Ordering) -> Result<TreeTuple> {
    if tree.n_internal() == 0 {
        return Err(Error::Degenerate);
    }
    let internal_order = internal_nodes(tree, ordering);
    let leaf_order = tree.leaves_in_order();
    let n_internal = internal_order.len();
    let n_leaves = leaf_order.len();
    let n_features = tree.schema().n_numeric();

    // Leaf range [lo, hi) of every subtree, and the split point of its root.
    let mut left_range = vec![(0usize, 0usize); tree.nodes().len()];
    subtree_ranges(tree, tree.root(), 0, &mut left_range);

    let mut selection = Array2::zeros((n_internal, n_features));
    let mut thresholds = vec![0.0; n_internal];
    let mut test_bank = vec![None; n_internal];
    let mut bits = Array2::<u8>::ones((n_leaves, n_internal));
    for (j, &id) in internal_order.iter().enumerate() {
        let Node::Internal { test, .. } = tree.node(id) else {
            unreachable!("internal order lists only internal nodes");
        };
        match test {
            TestFunction::Axis { feature, threshold } => {
                selection[(j, *feature)] = 1.0;
                thresholds[j] = *threshold;
            }
            TestFunction::Oblique { weights, offset } => {
                selection
                    .row_mut(j)
                    .assign(&ArrayView1::from(weights.as_slice()));
                thresholds[j] = *offset;
            }
            other => test_bank[j] = Some(other.clone()),
        }
        let (lo, mid) = left_range[id];
        for i in lo..mid {
            bits[(i, j)] = 0;
        }
    }
    let values = leaf_order
        .iter()
        .map(|&id| match tree.node(id) {
            Node::Leaf { model } => model.clone(),
            Node::Internal { .. } => unreachable!("leaf order lists only leaves"),
        })
        .collect();
    Ok(TreeTuple::assemble(TupleParts {
        schema: tree.schema().clone(),
        selection,
        thresholds,
        bits: BitMatrix::new(bits)?,
        values,
        internal_order,
        leaf_order,
        test_bank,
    }))
}

fn internal_nodes(tree: &DecisionTree, ordering: Ordering) -> Vec<NodeId> {
    let mut out = Vec::with_capacity(tree.n_internal());
    match ordering {
        Ordering::Bfs => {
            let mut queue = VecDeque::from([tree.root()]);
            while let Some(id) = queue.pop_front() {
                if let Node::Internal { left, right, .. } = tree.node(id) {
                    out.push(id);
                    queue.push_back(*left);
                    queue.push_back(*right);
                }
            }
        }
        Ordering::Preorder => {
            let mut stack = vec![tree.root()];
            while let Some(id) = stack.pop() {
                if let Node::Internal { left, right, .. } = tree.node(id) {
                    out.push(id);
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
    }
    out
}

/// Records `(lo, mid)` for every internal node, where its left subtree holds
/// leaves `lo..mid`. Returns the number of leaves below `id`.
fn subtree_ranges(tree: &DecisionTree, id: NodeId, lo: usize, out: &mut [(usize, usize)]) -> usize {
    match tree.node(id) {
        Node::Leaf { .. } => 1,
        Node::Internal { left, right, .. } => {
            let n_left = subtree_ranges(tree, *left, lo, out);
            let n_right = subtree_ranges(tree, *right, lo + n_left, out);
            out[id] = (lo, lo + n_left);
            n_left + n_right
        }
    }
}

/// Signed decision path of every leaf: `(column, passed)` from the root down.
pub(crate) fn leaf_paths(skeleton: &Skeleton, n_leaves: usize) -> Vec<Vec<(usize, bool)>> {
    fn walk(sk: &Skeleton, prefix: &mut Vec<(usize, bool)>, out: &mut [Vec<(usize, bool)>]) {
        match sk {
            Skeleton::Leaf { row } => out[*row] = prefix.clone(),
            Skeleton::Split {
                column,
                left,
                right,
            } => {
                prefix.push((*column, true));
                walk(left, prefix, out);
                prefix.pop();
                prefix.push((*column, false));
                walk(right, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = vec![Vec::new(); n_leaves];
    walk(skeleton, &mut Vec::new(), &mut out);
    out
}

/// Minimal-support binary vector `u` with `first_argmax(B u) = leaf`: the
/// failed tests on the leaf's decision path.
pub fn characteristic_vector(tuple: &TreeTuple, leaf: usize) -> Result<Vec<u8>> {
    if leaf >= tuple.n_leaves() {
        return Err(Error::Input(format!(
            "leaf {leaf} out of range for {} leaves",
            tuple.n_leaves()
        )));
    }
    let skeleton = decode_structure(tuple.bits())?;
    let paths = leaf_paths(&skeleton, tuple.n_leaves());
    let mut u = vec![0u8; tuple.n_internal()];
    for &(col, passed) in &paths[leaf] {
        if !passed {
            u[col] = 1;
        }
    }
    Ok(u)
}

/// Leaves of internal node `col`'s left subtree: the zero rows of column `col`.
pub fn left_reachable_set(b: &BitMatrix, col: usize) -> Result<Vec<usize>> {
    if col >= b.cols() {
        return Err(Error::Input(format!(
            "column {col} out of range for {} columns",
            b.cols()
        )));
    }
    Ok(b.zero_rows(col))
}

/// Outcome of [`tuples_equivalent`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Equivalence {
    Equivalent,
    Different(String),
}

impl Equivalence {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Equivalence::Equivalent)
    }
}

/// Whether two tuples encode the same tree up to a permutation of internal
/// nodes. Both are brought to breadth-first column order and compared.
pub fn tuples_equivalent(a: &TreeTuple, b: &TreeTuple) -> Equivalence {
    use Equivalence::Different;
    if a.bits().as_array().dim() != b.bits().as_array().dim()
        || a.selection.dim() != b.selection.dim()
    {
        return Different(format!(
            "dimensions differ: B is {:?} vs {:?}, S is {:?} vs {:?}",
            a.bits().as_array().dim(),
            b.bits().as_array().dim(),
            a.selection.dim(),
            b.selection.dim()
        ));
    }
    if a.schema != b.schema {
        return Different("feature schemas differ".into());
    }
    let (sa, sb) = match (decode_structure(a.bits()), decode_structure(b.bits())) {
        (Ok(x), Ok(y)) => (x, y),
        _ => return Different("a bitvector matrix is not a structure matrix".into()),
    };
    if sa.shape() != sb.shape() {
        return Different("tree shapes differ".into());
    }
    if a.values != b.values {
        return Different("value vectors differ".into());
    }
    let (pa, pb) = (sa.columns_bfs(), sb.columns_bfs());
    for (k, (&ja, &jb)) in pa.iter().zip(&pb).enumerate() {
        if a.selection.row(ja) != b.selection.row(jb) {
            return Different(format!("selection rows differ at breadth-first node {k}"));
        }
        if a.thresholds[ja] != b.thresholds[jb] {
            return Different(format!("thresholds differ at breadth-first node {k}"));
        }
        if a.test_bank[ja] != b.test_bank[jb] {
            return Different(format!("tests differ at breadth-first node {k}"));
        }
        if a.bits.column(ja) != b.bits.column(jb) {
            return Different(format!("bitvectors differ at breadth-first node {k}"));
        }
    }
    Equivalence::Equivalent
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{figure_one_bits, figure_one_tree};
    use crate::schema::FeatureVector;
    use crate::tree::{evaluate_classic, LeafValue};
    use ndarray::array;

    fn one_split() -> DecisionTree {
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
        b.build(root, FeatureSchema::numeric(1)).unwrap()
    }

    #[test]
    fn figure_one_compiles_to_reference_matrices() {
        let t = compile(&figure_one_tree(), Ordering::Bfs).unwrap();
        assert_eq!(t.thresholds(), &[1.0, 4.0, 3.0, 2.0, 5.0]);
        let s = array![
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0]
        ];
        assert_eq!(t.selection(), &s);
        assert_eq!(t.bits(), &figure_one_bits());
        assert!(t.test_bank().iter().all(Option::is_none));
    }

    #[test]
    fn smallest_tree() {
        let t = compile(&one_split(), Ordering::Bfs).unwrap();
        assert_eq!(t.bits().to_row_strings(), vec!["0", "1"]);
        assert_eq!(t.thresholds(), &[0.0]);
    }

    #[test]
    fn single_leaf_is_degenerate() {
        let t = DecisionTree::single_leaf(LeafModel::real(1.0), FeatureSchema::numeric(1)).unwrap();
        assert!(matches!(compile(&t, Ordering::Bfs), Err(Error::Degenerate)));
    }

    #[test]
    fn decompile_round_trip() {
        let tree = figure_one_tree();
        for ordering in [Ordering::Bfs, Ordering::Preorder] {
            let t = compile(&tree, ordering).unwrap();
            let back = t.to_tree().unwrap();
            assert_eq!(back.shape(), tree.shape());
            for x in [
                [2.0, 1.0, 2.0, 2.0],
                [0.0, 3.0, 0.0, 9.0],
                [5.0, 0.0, 4.0, 0.0],
            ] {
                let x = FeatureVector::numeric(x.to_vec());
                assert_eq!(
                    evaluate_classic(&back, &x).unwrap().value,
                    evaluate_classic(&tree, &x).unwrap().value
                );
            }
        }
    }

    #[test]
    fn characteristic_vectors_of_figure_one() {
        let t = compile(&figure_one_tree(), Ordering::Bfs).unwrap();
        assert_eq!(characteristic_vector(&t, 4).unwrap(), vec![1, 0, 0, 0, 0]);
        assert_eq!(characteristic_vector(&t, 5).unwrap(), vec![1, 0, 1, 0, 0]);
        assert_eq!(characteristic_vector(&t, 2).unwrap(), vec![0, 0, 0, 1, 1]);
        assert_eq!(characteristic_vector(&t, 0).unwrap(), vec![0; 5]);
        assert!(characteristic_vector(&t, 6).is_err());
    }

    #[test]
    fn left_reachable_sets() {
        let b = figure_one_bits();
        assert_eq!(left_reachable_set(&b, 0).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(left_reachable_set(&b, 4).unwrap(), vec![1]);
        let one = BitMatrix::from_row_strings(&["0", "1"]).unwrap();
        assert_eq!(left_reachable_set(&one, 0).unwrap(), vec![0]);
        assert!(left_reachable_set(&b, 5).is_err());
    }

    #[test]
    fn zero_count_matches_left_subtree_size() {
        let tree = figure_one_tree();
        let t = compile(&tree, Ordering::Bfs).unwrap();
        for (j, &id) in t.internal_order().iter().enumerate() {
            let Node::Internal { left, .. } = tree.node(id) else {
                unreachable!()
            };
            let mut count = 0;
            let mut stack = vec![*left];
            while let Some(n) = stack.pop() {
                match tree.node(n) {
                    Node::Leaf { .. } => count += 1,
                    Node::Internal { left, right, .. } => {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
            assert_eq!(t.bits().zero_rows(j).len(), count);
        }
    }

    #[test]
    fn equivalence() {
        let tree = figure_one_tree();
        let bfs = compile(&tree, Ordering::Bfs).unwrap();
        let pre = compile(&tree, Ordering::Preorder).unwrap();
        assert_ne!(bfs.bits(), pre.bits());
        assert!(tuples_equivalent(&bfs, &pre).is_equivalent());
        assert!(tuples_equivalent(&bfs, &bfs).is_equivalent());
        let small = compile(&one_split(), Ordering::Bfs).unwrap();
        assert!(!tuples_equivalent(&bfs, &small).is_equivalent());

        // Same shape, different threshold.
        let mut parts = pre.clone().into_parts();
        parts.thresholds[1] += 1.0;
        let moved = TreeTuple::from_parts(parts).unwrap();
        assert!(!tuples_equivalent(&bfs, &moved).is_equivalent());
    }

    #[test]
    fn from_parts_rejects_invalid_matrix() {
        let t = compile(&figure_one_tree(), Ordering::Bfs).unwrap();
        let mut parts = t.into_parts();
        parts.bits = crate::fixtures::counterexample_bits();
        assert!(matches!(
            TreeTuple::from_parts(parts),
            Err(Error::InvalidStructure(_))
        ));
    }

    #[test]
    fn categorical_tests_go_to_the_bank() {
        use crate::schema::{FeatureDef, FeatureKind};
        let schema = FeatureSchema::new(vec![
            FeatureDef {
                name: "x".into(),
                kind: FeatureKind::Numeric,
            },
            FeatureDef {
                name: "color".into(),
                kind: FeatureKind::Categorical {
                    vocabulary: vec!["red".into(), "green".into()],
                },
            },
        ])
        .unwrap();
        let mut b = TreeBuilder::new();
        let l = b.leaf(LeafModel::class(0));
        let r = b.leaf(LeafModel::class(1));
        let root = b.split(
            TestFunction::Categorical {
                feature: 0,
                accepted: [0].into(),
            },
            l,
            r,
        );
        let tree = b.build(root, schema).unwrap();
        let t = compile(&tree, Ordering::Bfs).unwrap();
        assert!(t.test_bank()[0].is_some());
        assert_eq!(t.selection().row(0).sum(), 0.0);
        let red = FeatureVector::new(vec![0.0], vec![0]);
        assert_eq!(
            evaluate_classic(&tree, &red).unwrap().value,
            LeafValue::Class(0)
        );
        assert_eq!(t.to_tree().unwrap(), {
            let mut b = TreeBuilder::new();
            let l = b.leaf(LeafModel::class(0));
            let r = b.leaf(LeafModel::class(1));
            let root = b.split(t.column_test(0), l, r);
            b.build(root, tree.schema().clone()).unwrap()
        });
    }
}
