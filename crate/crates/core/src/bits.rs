//! Dense 0/1 matrices and bit-packed column masks.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// A matrix whose entries are all 0 or 1.
///
/// Rows index leaves (left to right), columns index internal nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    data: Array2<u8>,
}

impl BitMatrix {
    pub fn new(data: Array2<u8>) -> Result<Self> {
        if let Some(((i, j), v)) = data.indexed_iter().find(|(_, &v)| v > 1) {
            return Err(Error::Input(format!(
                "entry ({i}, {j}) is {v}; bitvector matrices are 0/1"
            )));
        }
        Ok(BitMatrix { data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        BitMatrix {
            data: Array2::zeros((rows, cols)),
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        BitMatrix {
            data: Array2::ones((rows, cols)),
        }
    }

    /// Parses rows written as strings of `'0'` and `'1'`.
    pub fn from_row_strings<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let n_cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Array2::zeros((rows.len(), n_cols));
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(Error::Input(format!(
                    "row {i} has {} entries, expected {n_cols}",
                    row.len()
                )));
            }
            for (j, ch) in row.chars().enumerate() {
                data[(i, j)] = match ch {
                    '0' => 0,
                    '1' => 1,
                    other => {
                        return Err(Error::Input(format!(
                            "row {i} contains `{other}`; expected '0' or '1'"
                        )))
                    }
                };
            }
        }
        Ok(BitMatrix { data })
    }

    pub fn to_row_strings(&self) -> Vec<String> {
        self.data
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect())
            .collect()
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[(row, col)]
    }

    pub fn column(&self, col: usize) -> ArrayView1<'_, u8> {
        self.data.column(col)
    }

    pub fn as_array(&self) -> &Array2<u8> {
        &self.data
    }

    /// Rows holding a 0 in column `col`.
    pub fn zero_rows(&self, col: usize) -> Vec<usize> {
        self.data
            .column(col)
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Entrywise `1 - b`.
    pub fn complement(&self) -> BitMatrix {
        BitMatrix {
            data: self.data.mapv(|b| 1 - b),
        }
    }

    /// Copy with entry `(row, col)` flipped.
    pub fn with_flipped(&self, row: usize, col: usize) -> BitMatrix {
        let mut data = self.data.clone();
        data[(row, col)] ^= 1;
        BitMatrix { data }
    }

    pub fn to_i64(&self) -> Vec<Vec<i64>> {
        self.data
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&b| b as i64).collect())
            .collect()
    }

    /// Each column packed into little-endian words: bit `i % 64` of word
    /// `i / 64` holds row `i`.
    pub fn packed_columns(&self) -> Vec<PackedBits> {
        (0..self.cols())
            .map(|j| PackedBits::from_bits(self.data.column(j).iter().map(|&b| b == 1)))
            .collect()
    }
}

/// Element-wise `1 - b` of a 0/1 vector.
pub fn complement(bits: &[u8]) -> Result<Vec<u8>> {
    bits.iter()
        .map(|&b| match b {
            0 => Ok(1),
            1 => Ok(0),
            other => Err(Error::Input(format!("bitvector entry {other} is not 0/1"))),
        })
        .collect()
}

/// Fixed-length bitset stored in `u64` words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PackedBits {
    words: Vec<u64>,
    len: usize,
}

impl PackedBits {
    pub fn ones(len: usize) -> Self {
        let mut words = vec![u64::MAX; len.div_ceil(64)];
        if !len.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last = (1u64 << (len % 64)) - 1;
            }
        }
        PackedBits { words, len }
    }

    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for b in bits {
            if len % 64 == 0 {
                words.push(0);
            }
            if b {
                words[len / 64] |= 1 << (len % 64);
            }
            len += 1;
        }
        PackedBits { words, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn and_assign(&mut self, other: &PackedBits) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= *b;
        }
    }

    /// Index of the first set bit (the leftmost leaf still reachable).
    pub fn first_set(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(k, w)| k * 64 + w.trailing_zeros() as usize)
    }
}
