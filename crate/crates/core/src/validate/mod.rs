//! Structure-matrix validation and exact rank and determinant checks.
//!
//! A 0/1 matrix is a valid structure matrix exactly when it can be produced
//! by compiling some tree. Validity is decided by rebuilding the tree from
//! the columns; the first contradiction met is reported under the rule it
//! breaks:
//!
//! 1. the root column's zero block starts at the leftmost leaf and is the
//!    longest such block short of covering every leaf;
//! 2. a node whose left child is a leaf has exactly one zero;
//! 3. a left child keeps the ones of its ancestors (its zeros form a block
//!    inside the parent's zero block);
//! 4. a right child turns the parent's zeros into ones and takes its own
//!    block from the parent's remaining range.

mod exact;

use std::fmt;

use serde::Serialize;

pub use exact::{determinant_int, rank_int};

use crate::bits::BitMatrix;
use crate::error::{Error, Result};
use crate::tree::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RuleId {
    /// Every column needs at least one zero.
    #[serde(rename = "zero-present")]
    ZeroPresent,
    /// Every column needs at least one one.
    #[serde(rename = "one-present")]
    OnePresent,
    #[serde(rename = "rule-1")]
    RootMostZeros,
    #[serde(rename = "rule-2")]
    LeftLeafParent,
    #[serde(rename = "rule-3")]
    LeftInheritsOnes,
    #[serde(rename = "rule-4")]
    RightShiftsZeros,
    /// Columns left over once every leaf range has been split.
    #[serde(rename = "reconstruction")]
    Reconstruction,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RuleId::ZeroPresent => "zero-present",
            RuleId::OnePresent => "one-present",
            RuleId::RootMostZeros => "rule-1",
            RuleId::LeftLeafParent => "rule-2",
            RuleId::LeftInheritsOnes => "rule-3",
            RuleId::RightShiftsZeros => "rule-4",
            RuleId::Reconstruction => "reconstruction",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: RuleId,
    pub columns: Vec<usize>,
    pub rows: Vec<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
    pub rank: usize,
    pub augmented_det_nonzero: bool,
}

/// Tree shape recovered from a structure matrix. Internal nodes carry the
/// column they were read from, leaves the row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Skeleton {
    Leaf {
        row: usize,
    },
    Split {
        column: usize,
        left: Box<Skeleton>,
        right: Box<Skeleton>,
    },
}

impl Skeleton {
    pub fn shape(&self) -> Shape {
        match self {
            Skeleton::Leaf { .. } => Shape::Leaf,
            Skeleton::Split { left, right, .. } => Shape::split(left.shape(), right.shape()),
        }
    }

    /// Columns in breadth-first order (left to right, top to bottom).
    pub fn columns_bfs(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut queue = std::collections::VecDeque::from([self]);
        while let Some(node) = queue.pop_front() {
            if let Skeleton::Split {
                column,
                left,
                right,
            } = node
            {
                out.push(*column);
                queue.push_back(left);
                queue.push_back(right);
            }
        }
        out
    }

    /// Columns in preorder.
    pub fn columns_preorder(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            if let Skeleton::Split {
                column,
                left,
                right,
            } = node
            {
                out.push(*column);
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }
}

fn check_shape(b: &BitMatrix) -> Result<()> {
    if b.rows() < 2 || b.cols() + 1 != b.rows() {
        return Err(Error::Input(format!(
            "a bitvector matrix is L x (L-1) with L >= 2; got {} x {}",
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Root,
    Left,
    Right,
}

struct Rebuild {
    /// Candidate `(block length, column)` pairs by first zero row, longest first.
    by_start: Vec<Vec<(usize, usize)>>,
    used: Vec<bool>,
}

impl Rebuild {
    fn build(&mut self, lo: usize, hi: usize, side: Side) -> Result<Skeleton, Violation> {
        let size = hi - lo;
        if size == 1 {
            return Ok(Skeleton::Leaf { row: lo });
        }
        let pick = self.by_start[lo]
            .iter()
            .copied()
            .find(|&(len, col)| len < size && !self.used[col]);
        let Some((len, column)) = pick else {
            let rows: Vec<usize> = (lo..hi).collect();
            let (rule, message) = if size == 2 {
                (
                    RuleId::LeftLeafParent,
                    format!("no column with a single zero at row {lo} to split leaves {lo}..{hi}"),
                )
            } else {
                let rule = match side {
                    Side::Root => RuleId::RootMostZeros,
                    Side::Left => RuleId::LeftInheritsOnes,
                    Side::Right => RuleId::RightShiftsZeros,
                };
                (
                    rule,
                    format!("no column whose zero block starts at row {lo} and splits leaves {lo}..{hi}"),
                )
            };
            return Err(Violation {
                rule,
                columns: Vec::new(),
                rows,
                message,
            });
        };
        self.used[column] = true;
        let left = self.build(lo, lo + len, Side::Left)?;
        let right = self.build(lo + len, hi, Side::Right)?;
        Ok(Skeleton::Split {
            column,
            left: Box::new(left),
            right: Box::new(right),
        })
    }
}

/// Rebuilds the tree shape from `b`, or lists the violated rules.
///
/// `b` must already have shape L x (L-1).
fn reconstruct(b: &BitMatrix) -> Result<Skeleton, Vec<Violation>> {
    let rows = b.rows();
    let mut violations = Vec::new();
    let mut blocks = Vec::with_capacity(b.cols());
    for j in 0..b.cols() {
        let zeros = b.zero_rows(j);
        if zeros.is_empty() {
            violations.push(Violation {
                rule: RuleId::ZeroPresent,
                columns: vec![j],
                rows: Vec::new(),
                message: format!("column {j} has no zero"),
            });
            continue;
        }
        if zeros.len() == rows {
            violations.push(Violation {
                rule: RuleId::OnePresent,
                columns: vec![j],
                rows: Vec::new(),
                message: format!("column {j} has no one"),
            });
            continue;
        }
        let start = zeros[0];
        if zeros.iter().enumerate().any(|(k, &r)| r != start + k) {
            violations.push(Violation {
                rule: RuleId::LeftInheritsOnes,
                columns: vec![j],
                rows: zeros.clone(),
                message: format!("zeros of column {j} are not a contiguous block of leaves"),
            });
            continue;
        }
        blocks.push((j, start, zeros.len()));
    }
    if !violations.is_empty() {
        return Err(violations);
    }

    let mut by_start = vec![Vec::new(); rows];
    for &(j, start, len) in &blocks {
        by_start[start].push((len, j));
    }
    for list in &mut by_start {
        list.sort_by(|a, b| b.cmp(a));
    }
    let mut rb = Rebuild {
        by_start,
        used: vec![false; b.cols()],
    };
    let skeleton = rb.build(0, rows, Side::Root).map_err(|v| vec![v])?;
    let unused: Vec<usize> = (0..b.cols()).filter(|&j| !rb.used[j]).collect();
    if !unused.is_empty() {
        return Err(vec![Violation {
            rule: RuleId::Reconstruction,
            columns: unused.clone(),
            rows: Vec::new(),
            message: format!("columns {unused:?} do not mask the left subtree of any node"),
        }]);
    }
    Ok(skeleton)
}

/// Recovers the tree shape encoded by a structure matrix.
pub fn decode_structure(b: &BitMatrix) -> Result<Skeleton> {
    check_shape(b)?;
    reconstruct(b).map_err(Error::InvalidStructure)
}

/// Decides whether `b` is the bitvector matrix of some tree.
pub fn check_four_rules(b: &BitMatrix) -> Result<ValidationReport> {
    check_shape(b)?;
    let violations = reconstruct(b).err().unwrap_or_default();
    Ok(ValidationReport {
        valid: violations.is_empty(),
        violations,
        rank: rank_exact(b),
        augmented_det_nonzero: augmented_invertible(b)?,
    })
}

/// True iff no two columns sum to the all-ones vector.
pub fn check_complement_pairs(b: &BitMatrix) -> bool {
    let a = b.as_array();
    for j in 0..b.cols() {
        for k in (j + 1)..b.cols() {
            if a.column(j).iter().zip(a.column(k)).all(|(x, y)| x + y == 1) {
                return false;
            }
        }
    }
    true
}

/// Exact rank over the rationals.
pub fn rank_exact(b: &BitMatrix) -> usize {
    rank_int(&b.to_i64())
}

/// Whether `[B | 1]` is nonsingular. `b` must be L x (L-1).
pub fn augmented_invertible(b: &BitMatrix) -> Result<bool> {
    if b.cols() + 1 != b.rows() {
        return Err(Error::Input(format!(
            "augmented matrix needs L x (L-1), got {} x {}",
            b.rows(),
            b.cols()
        )));
    }
    let rows: Vec<Vec<i64>> = b
        .to_i64()
        .into_iter()
        .map(|mut r| {
            r.push(1);
            r
        })
        .collect();
    Ok(exact::is_nonzero(&determinant_int(&rows)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{counterexample_bits, figure_one_bits};
    use ndarray::Array2;

    #[test]
    fn figure_one_is_valid() {
        let report = check_four_rules(&figure_one_bits()).unwrap();
        assert!(report.valid, "{:?}", report.violations);
        assert_eq!(report.rank, 5);
        assert!(report.augmented_det_nonzero);
    }

    #[test]
    fn counterexample_is_rejected() {
        let report = check_four_rules(&counterexample_bits()).unwrap();
        assert!(!report.valid);
        assert!(!report.violations.is_empty());
        assert!(decode_structure(&counterexample_bits()).is_err());
    }

    #[test]
    fn square_matrix_is_input_error() {
        let eye = BitMatrix::new(Array2::eye(4)).unwrap();
        assert!(matches!(check_four_rules(&eye), Err(Error::Input(_))));
    }

    #[test]
    fn decode_figure_one_shape() {
        let sk = decode_structure(&figure_one_bits()).unwrap();
        let expected = Shape::split(
            Shape::split(
                Shape::split(Shape::Leaf, Shape::split(Shape::Leaf, Shape::Leaf)),
                Shape::Leaf,
            ),
            Shape::split(Shape::Leaf, Shape::Leaf),
        );
        assert_eq!(sk.shape(), expected);
        assert_eq!(sk.columns_bfs(), vec![0, 1, 2, 3, 4]);
        assert_eq!(sk.columns_preorder(), vec![0, 1, 3, 4, 2]);
    }

    #[test]
    fn single_split() {
        let b = BitMatrix::from_row_strings(&["0", "1"]).unwrap();
        assert_eq!(
            decode_structure(&b).unwrap().shape(),
            Shape::split(Shape::Leaf, Shape::Leaf)
        );
        assert!(augmented_invertible(&b).unwrap());
    }

    #[test]
    fn complement_pairs() {
        assert!(check_complement_pairs(&figure_one_bits()));
        let pair = BitMatrix::from_row_strings(&["01", "10"]).unwrap();
        assert!(!check_complement_pairs(&pair));
        assert!(check_complement_pairs(
            &BitMatrix::from_row_strings(&["0", "1"]).unwrap()
        ));
    }

    #[test]
    fn ranks() {
        assert_eq!(rank_exact(&figure_one_bits()), 5);
        assert_eq!(rank_exact(&BitMatrix::ones(6, 5)), 1);
        assert_eq!(rank_exact(&figure_one_bits().complement()), 5);
    }

    #[test]
    fn repeated_columns_are_singular() {
        let b = BitMatrix::from_row_strings(&["00", "00", "11"]).unwrap();
        assert!(!augmented_invertible(&b).unwrap());
        let report = check_four_rules(&b).unwrap();
        assert!(!report.valid);
    }

    #[test]
    fn rule_mapping_examples() {
        // Column without zeros.
        let b = BitMatrix::from_row_strings(&["01", "11", "11"]).unwrap();
        let v = decode_structure(&b).unwrap_err();
        assert!(matches!(v, Error::InvalidStructure(ref vs) if vs[0].rule == RuleId::ZeroPresent));
        // No zero block starts at the leftmost leaf.
        let b = BitMatrix::from_row_strings(&["11", "01", "00"]).unwrap();
        let v = decode_structure(&b).unwrap_err();
        assert!(
            matches!(v, Error::InvalidStructure(ref vs) if vs[0].rule == RuleId::RootMostZeros)
        );
    }

    #[test]
    fn root_need_not_hold_the_most_zeros() {
        // Root's left child is a leaf; its right child has a two-leaf left
        // subtree, so a non-root column carries more zeros than the root.
        let b = BitMatrix::from_row_strings(&["011", "100", "101", "111"]).unwrap();
        assert!(check_four_rules(&b).unwrap().valid);
        let sk = decode_structure(&b).unwrap();
        assert_eq!(
            sk.shape(),
            Shape::split(
                Shape::Leaf,
                Shape::split(Shape::split(Shape::Leaf, Shape::Leaf), Shape::Leaf)
            )
        );
    }
}
