//! Helpers shared by the integration tests.
#![allow(dead_code)]

use arbo::bits::BitMatrix;
use arbo::tree::{NodeId, Shape};
use arbo::{DecisionTree, FeatureSchema, LeafModel, TestFunction, TreeBuilder};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// Every full binary tree shape with `n` leaves, in a fixed order.
pub fn shapes(n: usize) -> Vec<Shape> {
    assert!(n >= 1);
    if n == 1 {
        return vec![Shape::Leaf];
    }
    let mut out = Vec::new();
    for k in 1..n {
        let lefts = shapes(k);
        let rights = shapes(n - k);
        for l in &lefts {
            for r in &rights {
                out.push(Shape::split(l.clone(), r.clone()));
            }
        }
    }
    out
}

pub fn catalan(n: u64) -> u64 {
    // C(n) = (2n)! / ((n+1)! n!), computed incrementally.
    (0..n).fold(1, |c, k| c * 2 * (2 * k + 1) / (k + 2))
}

fn add_shape(
    b: &mut TreeBuilder,
    s: &Shape,
    next_leaf: &mut usize,
    next_test: &mut usize,
) -> NodeId {
    match s {
        Shape::Leaf => {
            *next_leaf += 1;
            b.leaf(LeafModel::real(*next_leaf as f64))
        }
        Shape::Split(l, r) => {
            let left = add_shape(b, l, next_leaf, next_test);
            let right = add_shape(b, r, next_leaf, next_test);
            *next_test += 1;
            let test = TestFunction::Axis {
                feature: *next_test % 3,
                threshold: *next_test as f64,
            };
            b.split(test, left, right)
        }
    }
}

/// A tree of the given shape with distinct axis tests and leaf values.
pub fn tree_of_shape(s: &Shape) -> DecisionTree {
    tree_of_split(s, None)
}

/// Tree whose root splits into `left` and, if given, `right`; with `right`
/// absent, `left` is the whole tree.
pub fn tree_of_split(left: &Shape, right: Option<&Shape>) -> DecisionTree {
    let mut b = TreeBuilder::new();
    let (mut leaf, mut test) = (0, 0);
    let root = match right {
        None => add_shape(&mut b, left, &mut leaf, &mut test),
        Some(r) => {
            let l = add_shape(&mut b, left, &mut leaf, &mut test);
            let r = add_shape(&mut b, r, &mut leaf, &mut test);
            test += 1;
            b.split(
                TestFunction::Axis {
                    feature: 0,
                    threshold: test as f64,
                },
                l,
                r,
            )
        }
    };
    b.build(root, FeatureSchema::numeric(3)).unwrap()
}

/// Rank over the rationals by plain Gaussian elimination.
pub fn rational_rank(rows: &[Vec<i64>]) -> usize {
    let mut m: Vec<Vec<BigRational>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|&v| BigRational::from_integer(BigInt::from(v)))
                .collect()
        })
        .collect();
    let n_cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..n_cols {
        let Some(p) = (rank..m.len()).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        let pivot_row = m[rank].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != rank && !row[col].is_zero() {
                let f = row[col].clone() / pivot_row[col].clone();
                for (dst, src) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *dst -= f.clone() * src.clone();
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Determinant over the rationals by Gaussian elimination.
pub fn rational_det(rows: &[Vec<i64>]) -> BigInt {
    let n = rows.len();
    let mut m: Vec<Vec<BigRational>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|&v| BigRational::from_integer(BigInt::from(v)))
                .collect()
        })
        .collect();
    let mut det = BigRational::one();
    for col in 0..n {
        let Some(p) = (col..n).find(|&i| !m[i][col].is_zero()) else {
            return BigInt::zero();
        };
        if p != col {
            m.swap(col, p);
            det = -det;
        }
        let pivot_row = m[col].clone();
        det *= pivot_row[col].clone();
        for row in m.iter_mut().skip(col + 1) {
            if !row[col].is_zero() {
                let f = row[col].clone() / pivot_row[col].clone();
                for (dst, src) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *dst -= f.clone() * src.clone();
                }
            }
        }
    }
    assert!(det.is_integer());
    det.to_integer()
}

/// Columns of `b` as sorted bit strings: a canonical form that ignores the
/// internal-node order.
pub fn column_multiset(b: &BitMatrix) -> Vec<String> {
    let mut cols: Vec<String> = (0..b.cols())
        .map(|j| {
            b.column(j)
                .iter()
                .map(|&v| if v == 1 { '1' } else { '0' })
                .collect()
        })
        .collect();
    cols.sort();
    cols
}

/// Each row of `b` as a bit mask over columns.
pub fn row_masks(b: &BitMatrix) -> Vec<u64> {
    (0..b.rows())
        .map(|i| {
            (0..b.cols())
                .filter(|&j| b.get(i, j) == 1)
                .fold(0u64, |m, j| m | (1 << j))
        })
        .collect()
}
