//! Signed decision-path form.
//!
//! Row `i` of the pattern matrix holds `-1` for every test leaf `i` needs to
//! pass, `+1` for every test it needs to fail and `0` for tests off its path.
//! Scoring a sign vector against the L1-normalized rows gives exactly 1 on
//! the realized leaf and strictly less everywhere else.

use ndarray::{s, Array2};

use super::{decode_structure, leaf_paths, TreeTuple, TupleParts};
use crate::bits::BitMatrix;
use crate::error::{Error, Result};
use crate::schema::FeatureSchema;
use crate::tree::{LeafModel, NodeId, TestFunction};

#[derive(Debug, Clone, PartialEq)]
pub struct TernaryTuple {
    schema: FeatureSchema,
    /// `[S | -t]`, applied to `[x; 1]`.
    augmented: Array2<f64>,
    pattern: Array2<i8>,
    norms: Vec<u32>,
    values: Vec<LeafModel>,
    internal_order: Vec<NodeId>,
    leaf_order: Vec<NodeId>,
    test_bank: Vec<Option<TestFunction>>,
}

/// Derives the signed decision-path form of a tuple.
pub fn ternary_form(tuple: &TreeTuple) -> TernaryTuple {
    let skeleton = decode_structure(tuple.bits()).expect("tuple matrices are valid");
    let (n_leaves, n_internal) = (tuple.n_leaves(), tuple.n_internal());
    let mut pattern = Array2::<i8>::zeros((n_leaves, n_internal));
    for (i, path) in leaf_paths(&skeleton, n_leaves).iter().enumerate() {
        for &(col, passed) in path {
            pattern[(i, col)] = if passed { -1 } else { 1 };
        }
    }
    let n = tuple.schema().n_numeric();
    let mut augmented = Array2::zeros((n_internal, n + 1));
    augmented.slice_mut(s![.., ..n]).assign(tuple.selection());
    for (j, &t) in tuple.thresholds().iter().enumerate() {
        augmented[(j, n)] = -t;
    }
    TernaryTuple {
        schema: tuple.schema().clone(),
        augmented,
        norms: row_norms(&pattern),
        pattern,
        values: tuple.values().to_vec(),
        internal_order: tuple.internal_order().to_vec(),
        leaf_order: tuple.leaf_order().to_vec(),
        test_bank: tuple.test_bank().to_vec(),
    }
}

fn row_norms(pattern: &Array2<i8>) -> Vec<u32> {
    pattern
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.unsigned_abs() as u32).sum())
        .collect()
}

impl TernaryTuple {
    /// Assembles a ternary tuple from stored parts, checking that the
    /// pattern is the decision-path matrix of a valid tree.
    pub fn from_parts(
        schema: FeatureSchema,
        augmented: Array2<f64>,
        pattern: Array2<i8>,
        values: Vec<LeafModel>,
        internal_order: Vec<NodeId>,
        leaf_order: Vec<NodeId>,
        test_bank: Vec<Option<TestFunction>>,
    ) -> Result<Self> {
        let n = schema.n_numeric();
        if augmented.ncols() != n + 1 || augmented.nrows() != pattern.ncols() {
            return Err(Error::Dimension(format!(
                "augmented test matrix is {:?}, expected ({}, {})",
                augmented.dim(),
                pattern.ncols(),
                n + 1
            )));
        }
        if let Some(v) = pattern.iter().find(|v| !(-1..=1).contains(*v)) {
            return Err(Error::Input(format!(
                "ternary entry {v} is not in {{-1, 0, 1}}"
            )));
        }
        let candidate = TernaryTuple {
            schema,
            augmented,
            norms: row_norms(&pattern),
            pattern,
            values,
            internal_order,
            leaf_order,
            test_bank,
        };
        let tuple = candidate.to_tuple()?;
        if ternary_form(&tuple).pattern != candidate.pattern {
            return Err(Error::Input(
                "ternary pattern is not the decision-path matrix of its tree".into(),
            ));
        }
        Ok(candidate)
    }

    /// Recovers the plain tuple: a leaf lies in a node's left subtree exactly
    /// when its pattern entry for that node is `-1`.
    pub fn to_tuple(&self) -> Result<TreeTuple> {
        let n = self.schema.n_numeric();
        let bits = BitMatrix::new(self.pattern.mapv(|v| u8::from(v != -1)))?;
        TreeTuple::from_parts(TupleParts {
            schema: self.schema.clone(),
            selection: self.augmented.slice(s![.., ..n]).to_owned(),
            thresholds: self.augmented.column(n).iter().map(|v| -v).collect(),
            bits,
            values: self.values.clone(),
            internal_order: self.internal_order.clone(),
            leaf_order: self.leaf_order.clone(),
            test_bank: self.test_bank.clone(),
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn augmented(&self) -> &Array2<f64> {
        &self.augmented
    }

    pub fn pattern(&self) -> &Array2<i8> {
        &self.pattern
    }

    /// L1 norm of each pattern row: the number of tests on the leaf's path.
    pub fn norms(&self) -> &[u32] {
        &self.norms
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

    pub fn n_internal(&self) -> usize {
        self.pattern.ncols()
    }

    pub fn n_leaves(&self) -> usize {
        self.pattern.nrows()
    }
}
