//! Fraction-free (Bareiss) elimination over exact integers.
//!
//! Elimination first runs in checked `i128`; on overflow it restarts with
//! arbitrary-precision integers. No floating point is involved.

use num_bigint::BigInt;
use num_traits::{One, Zero};

trait ExactRing: Clone + PartialEq {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn is_zero(&self) -> bool;
    fn neg(&self) -> Option<Self>;
    /// `(a * d - b * c) / q`, where the division is known to be exact.
    fn cross_div(a: &Self, d: &Self, b: &Self, c: &Self, q: &Self) -> Option<Self>;
}

impl ExactRing for i128 {
    fn zero() -> Self {
        0
    }
    fn one() -> Self {
        1
    }
    fn from_i64(v: i64) -> Self {
        v as i128
    }
    fn is_zero(&self) -> bool {
        *self == 0
    }
    fn neg(&self) -> Option<Self> {
        self.checked_neg()
    }
    fn cross_div(a: &Self, d: &Self, b: &Self, c: &Self, q: &Self) -> Option<Self> {
        let lhs = a.checked_mul(*d)?;
        let rhs = b.checked_mul(*c)?;
        let num = lhs.checked_sub(rhs)?;
        debug_assert_eq!(num % q, 0, "Bareiss division must be exact");
        num.checked_div(*q)
    }
}

impl ExactRing for BigInt {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_i64(v: i64) -> Self {
        BigInt::from(v)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn neg(&self) -> Option<Self> {
        Some(-self)
    }
    fn cross_div(a: &Self, d: &Self, b: &Self, c: &Self, q: &Self) -> Option<Self> {
        Some((a * d - b * c) / q)
    }
}

struct Eliminated<T> {
    rank: usize,
    /// Determinant when the input was square, `None` otherwise.
    det: Option<T>,
}

fn bareiss<T: ExactRing>(input: &[Vec<i64>]) -> Option<Eliminated<T>> {
    let m = input.len();
    let n = input.first().map_or(0, Vec::len);
    let mut a: Vec<Vec<T>> = input
        .iter()
        .map(|row| row.iter().map(|&v| T::from_i64(v)).collect())
        .collect();
    let mut prev = T::one();
    let mut rank = 0;
    let mut negate = false;
    for c in 0..n {
        if rank == m {
            break;
        }
        let Some(p) = (rank..m).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        if p != rank {
            a.swap(p, rank);
            negate = !negate;
        }
        let (top, rest) = a.split_at_mut(rank + 1);
        let pivot_row = &top[rank];
        for row in rest.iter_mut() {
            for j in (c + 1)..n {
                row[j] = T::cross_div(&pivot_row[c], &row[j], &row[c], &pivot_row[j], &prev)?;
            }
            row[c] = T::zero();
        }
        prev = pivot_row[c].clone();
        rank += 1;
    }
    let det = (m == n).then(|| {
        if rank < n {
            Some(T::zero())
        } else if n == 0 {
            Some(T::one())
        } else if negate {
            a[n - 1][n - 1].neg()
        } else {
            Some(a[n - 1][n - 1].clone())
        }
    });
    let det = match det {
        Some(Some(d)) => Some(d),
        Some(None) => return None,
        None => None,
    };
    Some(Eliminated { rank, det })
}

fn check_rectangular(rows: &[Vec<i64>]) {
    let n = rows.first().map_or(0, Vec::len);
    assert!(
        rows.iter().all(|r| r.len() == n),
        "exact elimination needs a rectangular matrix"
    );
}

/// Rank over the rationals of an integer matrix.
pub fn rank_int(rows: &[Vec<i64>]) -> usize {
    check_rectangular(rows);
    match bareiss::<i128>(rows) {
        Some(e) => e.rank,
        None => {
            bareiss::<BigInt>(rows)
                .expect("big-integer elimination cannot overflow")
                .rank
        }
    }
}

/// Determinant of a square integer matrix.
pub fn determinant_int(rows: &[Vec<i64>]) -> BigInt {
    check_rectangular(rows);
    assert!(
        rows.first().is_none_or(|r| r.len() == rows.len()),
        "determinant needs a square matrix"
    );
    match bareiss::<i128>(rows) {
        Some(e) => BigInt::from(e.det.expect("square")),
        None => bareiss::<BigInt>(rows)
            .and_then(|e| e.det)
            .expect("big-integer elimination cannot overflow"),
    }
}

pub(crate) fn is_nonzero(v: &BigInt) -> bool {
    !Zero::is_zero(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_ranks() {
        assert_eq!(rank_int(&[vec![1, 2], vec![2, 4]]), 1);
        assert_eq!(rank_int(&[vec![0, 1], vec![1, 0]]), 2);
        assert_eq!(rank_int(&[vec![0, 0, 0]]), 0);
        assert_eq!(rank_int(&[]), 0);
        assert_eq!(rank_int(&vec![vec![1; 5]; 6]), 1);
        // Column without a pivot in the middle.
        assert_eq!(rank_int(&[vec![1, 2, 1], vec![2, 4, 3], vec![3, 6, 4]]), 2);
    }

    #[test]
    fn small_determinants() {
        assert_eq!(determinant_int(&[vec![0, 1], vec![1, 1]]), BigInt::from(-1));
        assert_eq!(
            determinant_int(&[vec![2, 0, 1], vec![1, 3, 2], vec![1, 1, 2]]),
            BigInt::from(6)
        );
        assert_eq!(determinant_int(&[vec![1, 1], vec![1, 1]]), BigInt::from(0));
    }

    #[test]
    fn overflow_falls_back_to_big_integers() {
        // diag(2^62, 2^62, 2^62) has determinant 2^186, far beyond i128.
        let big = 1i64 << 62;
        let rows = vec![vec![big, 0, 0], vec![0, big, 0], vec![1, 1, big]];
        assert!(bareiss::<i128>(&rows).is_none());
        assert_eq!(rank_int(&rows), 3);
        assert_eq!(determinant_int(&rows), BigInt::from(2).pow(186));
    }
}
