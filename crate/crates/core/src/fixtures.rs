//! The running six-leaf example tree and the matrices that accompany it.
//!
//! ```text
//!                 x1 <= 1
//!            T /          \ F
//!        x2 <= 4          x3 <= 3
//!       T /    \ F       T /   \ F
//!   x2 <= 2     v4      v5      v6
//!   T /   \ F
//!  v1   x4 <= 5
//!       T /  \ F
//!        v2    v3
//! ```
//!
//! Leaf values are `v_i = 10 * i`.

use ndarray::{array, Array2};

use crate::bits::BitMatrix;
use crate::schema::FeatureSchema;
use crate::tree::{DecisionTree, LeafModel, TestFunction, TreeBuilder};

fn axis(feature: usize, threshold: f64) -> TestFunction {
    TestFunction::Axis { feature, threshold }
}

pub fn figure_one_tree() -> DecisionTree {
    let mut b = TreeBuilder::new();
    let v: Vec<_> = (1..=6)
        .map(|i| b.leaf(LeafModel::real(10.0 * i as f64)))
        .collect();
    let n5 = b.split(axis(3, 5.0), v[1], v[2]);
    let n4 = b.split(axis(1, 2.0), v[0], n5);
    let n2 = b.split(axis(1, 4.0), n4, v[3]);
    let n3 = b.split(axis(2, 3.0), v[4], v[5]);
    let root = b.split(axis(0, 1.0), n2, n3);
    b.build(root, FeatureSchema::numeric(4))
        .expect("fixture tree is valid")
}

/// Bitvector matrix of [`figure_one_tree`] in breadth-first column order.
pub fn figure_one_bits() -> BitMatrix {
    BitMatrix::from_row_strings(&["00101", "00110", "00111", "01111", "11011", "11111"])
        .expect("fixture matrix is binary")
}

/// A 6x5 binary matrix that is not the structure matrix of any tree.
pub fn counterexample_bits() -> BitMatrix {
    BitMatrix::from_row_strings(&["00001", "00000", "11001", "11001", "10101", "11111"])
        .expect("fixture matrix is binary")
}

/// Real-valued replacement for [`figure_one_bits`]: ones become a positive
/// constant per column and zeros become arbitrary negatives.
pub fn figure_one_real_pattern() -> Array2<f64> {
    array![
        [-2.0, -200.0, 2.0, -3.0, 1.0],
        [-3.0, -400.0, 2.0, 4.0, -1.0],
        [-4.0, -4.0, 2.0, 4.0, 1.0],
        [-5.0, 20.0, 2.0, 4.0, 1.0],
        [5.1, 20.0, -2.0, 4.0, 1.0],
        [5.1, 20.0, 2.0, 4.0, 1.0],
    ]
}

/// Ternary decision-path matrix of [`figure_one_tree`] (rows = leaves,
/// -1 passed, +1 failed, 0 absent).
pub fn figure_one_ternary() -> Array2<i8> {
    array![
        [-1, -1, 0, -1, 0],
        [-1, -1, 0, 1, -1],
        [-1, -1, 0, 1, 1],
        [-1, 1, 0, 0, 0],
        [1, 0, -1, 0, 0],
        [1, 0, 1, 0, 0],
    ]
}
