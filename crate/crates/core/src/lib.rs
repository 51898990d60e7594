//! Decision trees as matrices.
//!
//! A binary decision tree with `L` leaves and `L - 1` internal nodes is
//! compiled into a selection matrix `S`, a threshold vector `t`, a 0/1
//! bitvector matrix `B` and a value vector `v`. Prediction becomes
//! `v[first_argmax(B * act(S x - t))]`, which several backends evaluate
//! (matrix, bitwise, ternary, sum-product and a soft relaxation), all checked
//! against classic root-to-leaf traversal.

pub mod bits;
pub mod ensemble;
pub mod error;
pub mod fixtures;
pub mod generate;
pub mod inference;
pub mod io;
pub mod schema;
pub mod selfcheck;
pub mod tensorize;
pub mod tree;
pub mod validate;

pub use error::{Error, Result};
pub use schema::{Dataset, FeatureDef, FeatureKind, FeatureSchema, FeatureVector};
pub use tree::{
    evaluate_classic, tree_depth, DecisionTree, LeafModel, LeafValue, TestFunction, TreeBuilder,
};
