//! Real-valued replacements for the bitvector matrix.
//!
//! Scaling columns of `B` by positive constants, or replacing its zeros with
//! negative numbers while keeping each column's positive entries equal,
//! leaves the first-argmax of the traversal scores unchanged.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{first_argmax, margins, Activation, Prediction};
use crate::bits::BitMatrix;
use crate::error::{Error, Result};
use crate::schema::FeatureVector;
use crate::tensorize::TreeTuple;
use crate::validate::check_four_rules;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// A valid 0/1 structure matrix.
    Bitvector,
    /// Columns are positive multiples of a structure matrix's columns.
    PositiveScaled,
    /// Positive entries constant per column, former zeros strictly negative.
    ZeroNegated,
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedB {
    entries: Array2<f64>,
    provenance: Provenance,
}

/// Column transform applied to a tuple's bitvector matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum BTransform {
    /// Multiply column `j` by `alpha[j] > 0`.
    PositiveScale(Vec<f64>),
    /// Replace every 0 by `c < 0`.
    ZeroNegate(f64),
}

impl GeneralizedB {
    /// Wraps a real matrix and classifies how it relates to a structure matrix.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(
                "generalized matrix entries must be finite".into(),
            ));
        }
        let provenance = classify(&entries);
        Ok(GeneralizedB {
            entries,
            provenance,
        })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// The 0/1 pattern of positive entries.
    pub fn positive_pattern(&self) -> BitMatrix {
        BitMatrix::new(self.entries.mapv(|v| u8::from(v > 0.0))).expect("0/1 entries")
    }
}

fn is_structure(b: &BitMatrix) -> bool {
    check_four_rules(b).is_ok_and(|r| r.valid)
}

fn classify(m: &Array2<f64>) -> Provenance {
    let pattern = BitMatrix::new(m.mapv(|v| u8::from(v > 0.0))).expect("0/1 entries");
    if m.nrows() != m.ncols() + 1 || !is_structure(&pattern) {
        return Provenance::Free;
    }
    let constant_positives = m.columns().into_iter().all(|col| {
        let mut pos = col.iter().filter(|&&v| v > 0.0);
        let first = pos.next().copied();
        pos.all(|&v| Some(v) == first)
    });
    if m.iter().all(|&v| v == 0.0 || v == 1.0) {
        Provenance::Bitvector
    } else if m.iter().all(|&v| v >= 0.0) {
        Provenance::PositiveScaled
    } else if constant_positives && m.iter().all(|&v| v != 0.0) {
        Provenance::ZeroNegated
    } else {
        Provenance::Free
    }
}

/// Applies `transform` to the bitvector matrix of `tuple`.
pub fn apply_generalized_b(tuple: &TreeTuple, transform: &BTransform) -> Result<GeneralizedB> {
    let b = tuple.bits().as_array().mapv(f64::from);
    let entries = match transform {
        BTransform::PositiveScale(alpha) => {
            if alpha.len() != b.ncols() {
                return Err(Error::Dimension(format!(
                    "{} scale factors for {} columns",
                    alpha.len(),
                    b.ncols()
                )));
            }
            if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
                return Err(Error::Config("scale factors must be finite and > 0".into()));
            }
            let mut m = b;
            for (j, mut col) in m.columns_mut().into_iter().enumerate() {
                col.mapv_inplace(|v| v * alpha[j]);
            }
            m
        }
        BTransform::ZeroNegate(c) => {
            if !(*c < 0.0 && c.is_finite()) {
                return Err(Error::Config(format!(
                    "zero replacement must be finite and < 0, got {c}"
                )));
            }
            b.mapv(|v| if v == 0.0 { *c } else { v })
        }
    };
    GeneralizedB::new(entries)
}

/// Traversal and prediction with `gb` standing in for the tuple's `B`.
pub fn predict_generalized(
    tuple: &TreeTuple,
    gb: &GeneralizedB,
    x: &FeatureVector,
    activation: &Activation,
) -> Result<Prediction> {
    if gb.entries.dim() != tuple.bits().as_array().dim() {
        return Err(Error::Dimension(format!(
            "generalized matrix is {:?}, tuple has {:?}",
            gb.entries.dim(),
            tuple.bits().as_array().dim()
        )));
    }
    tuple.schema().check(x)?;
    let h: Vec<f64> = margins(tuple, x)?
        .into_iter()
        .map(|m| activation.apply(m))
        .collect();
    let mut scores = vec![0.0; tuple.n_leaves()];
    for (j, col) in gb.entries.columns().into_iter().enumerate() {
        if h[j] != 0.0 {
            for (s, &v) in scores.iter_mut().zip(col) {
                *s += v * h[j];
            }
        }
    }
    let leaf = first_argmax(&scores)?;
    Ok(Prediction {
        leaf,
        value: tuple.values()[leaf].evaluate(x)?,
    })
}
