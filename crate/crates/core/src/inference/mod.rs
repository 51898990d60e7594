//! Evaluation backends over compiled tuples.
//!
//! The matrix backend runs three phases: margins `h~ = S x - t` passed
//! through an activation (`h`), traversal scores `b = B h`, and the leaf
//! `i = first_argmax(b)`. The bitwise backend ANDs the packed columns of the
//! failed tests and takes the leftmost surviving leaf. The ternary backend
//! matches test signs against each leaf's decision path.

mod activation;
mod generalized;
mod soft;

use serde::Serialize;

pub use activation::{Activation, ActivationRegistry, CustomActivation};
pub use generalized::{
    apply_generalized_b, predict_generalized, BTransform, GeneralizedB, Provenance,
};
pub use soft::{
    harmonic_weights, softmax_select, weighted_sparsemax, weighted_sparsemax_with_multiplier,
    SoftSelector,
};

use crate::bits::{BitMatrix, PackedBits};
use crate::error::{Error, Result};
use crate::schema::FeatureVector;
use crate::tensorize::{SumProductForm, TernaryTuple, TreeTuple};
use crate::tree::{dot, LeafValue, TestFunction};

/// Selected leaf (0-based, left to right) and its output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub leaf: usize,
    pub value: LeafValue,
}

/// Signed margin of a single test; positive means the test failed.
pub fn evaluate_test_function(test: &TestFunction, x: &FeatureVector) -> Result<f64> {
    test.margin(x)
}

/// Raw margins `h~` of every internal node, in column order.
pub fn margins(tuple: &TreeTuple, x: &FeatureVector) -> Result<Vec<f64>> {
    let n = tuple.schema().n_numeric();
    if x.numeric.len() != n {
        return Err(Error::Schema(format!(
            "input has {} numeric features, model expects {n}",
            x.numeric.len()
        )));
    }
    let s = tuple.selection();
    let row_major = s.as_slice();
    tuple
        .test_bank()
        .iter()
        .enumerate()
        .map(|(j, test)| match test {
            Some(t) => t.margin(x),
            None => {
                let row = match row_major {
                    Some(all) => dot(&all[j * n..(j + 1) * n], &x.numeric),
                    None => dot(&s.row(j).to_vec(), &x.numeric),
                };
                Ok(row - tuple.thresholds()[j])
            }
        })
        .collect()
}

/// Test phase: `h_j = activation(margin_j(x))`.
pub fn test_phase(
    tuple: &TreeTuple,
    x: &FeatureVector,
    activation: &Activation,
) -> Result<Vec<f64>> {
    tuple.schema().check(x)?;
    Ok(margins(tuple, x)?
        .into_iter()
        .map(|m| activation.apply(m))
        .collect())
}

/// Traversal phase: `b = B h`, accumulated column by column.
pub fn traversal_phase(b: &BitMatrix, h: &[f64]) -> Result<Vec<f64>> {
    if h.len() != b.cols() {
        return Err(Error::Dimension(format!(
            "h has length {}, B has {} columns",
            h.len(),
            b.cols()
        )));
    }
    let mut scores = vec![0.0; b.rows()];
    for (j, &hj) in h.iter().enumerate() {
        if hj != 0.0 {
            for (s, &bit) in scores.iter_mut().zip(b.column(j)) {
                if bit == 1 {
                    *s += hj;
                }
            }
        }
    }
    Ok(scores)
}

/// Smallest index attaining the maximum.
pub fn first_argmax(b: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in b.iter().enumerate() {
        match best {
            Some((_, m)) if v <= m => {}
            _ if v.is_nan() => {}
            _ => best = Some((i, v)),
        }
    }
    if b.is_empty() {
        return Err(Error::Input("first_argmax of an empty vector".into()));
    }
    Ok(best.map_or(0, |(i, _)| i))
}

/// Three-phase matrix prediction.
pub fn predict_matrix(
    tuple: &TreeTuple,
    x: &FeatureVector,
    activation: &Activation,
) -> Result<Prediction> {
    let h = test_phase(tuple, x, activation)?;
    let b = traversal_phase(tuple.bits(), &h)?;
    let leaf = first_argmax(&b)?;
    Ok(Prediction {
        leaf,
        value: tuple.values()[leaf].evaluate(x)?,
    })
}

/// Leftmost leaf surviving the AND of the failed tests' packed columns.
pub fn predict_bitwise(tuple: &TreeTuple, x: &FeatureVector) -> Result<Prediction> {
    tuple.schema().check(x)?;
    let mut mask = PackedBits::ones(tuple.n_leaves());
    for (j, m) in margins(tuple, x)?.into_iter().enumerate() {
        if m > 0.0 {
            mask.and_assign(&tuple.packed_columns()[j]);
        }
    }
    let leaf = mask
        .first_set()
        .ok_or_else(|| Error::Validation("no leaf survives the failed-test mask".into()))?;
    Ok(Prediction {
        leaf,
        value: tuple.values()[leaf].evaluate(x)?,
    })
}

/// Per-leaf ternary scores: pattern row dot sign vector over the row's L1
/// norm, with `sgn(0) = -1`. The realized leaf scores exactly 1.
pub fn ternary_scores(tt: &TernaryTuple, x: &FeatureVector) -> Result<Vec<f64>> {
    tt.schema().check(x)?;
    let n = tt.schema().n_numeric();
    let aug = tt.augmented();
    let signs: Vec<i32> = (0..tt.n_internal())
        .map(|j| {
            let m = match &tt.test_bank()[j] {
                Some(t) => t.margin(x)?,
                None => dot(&aug.row(j).to_vec()[..n], &x.numeric) + aug[(j, n)],
            };
            Ok(if m > 0.0 { 1 } else { -1 })
        })
        .collect::<Result<_>>()?;
    Ok(tt
        .pattern()
        .rows()
        .into_iter()
        .zip(tt.norms())
        .map(|(row, &norm)| {
            let s: i32 = row
                .iter()
                .zip(&signs)
                .map(|(&p, &g)| i32::from(p) * g)
                .sum();
            f64::from(s) / f64::from(norm)
        })
        .collect())
}

pub fn predict_ternary(tt: &TernaryTuple, x: &FeatureVector) -> Result<Prediction> {
    let scores = ternary_scores(tt, x)?;
    let leaf = first_argmax(&scores)?;
    Ok(Prediction {
        leaf,
        value: tt.values()[leaf].evaluate(x)?,
    })
}

/// `sum_m a_m prod_k H(s (x_v - t))`.
pub fn predict_sum_product(form: &SumProductForm, x: &FeatureVector) -> Result<f64> {
    form.evaluate(x)
}

/// Soft prediction: the selector's distribution over leaves applied to the
/// leaf outputs.
pub fn predict_soft(
    tuple: &TreeTuple,
    x: &FeatureVector,
    activation: &Activation,
    selector: &SoftSelector,
) -> Result<f64> {
    if !tuple.is_regression() {
        return Err(Error::Unsupported(
            "soft prediction needs numeric leaves".into(),
        ));
    }
    let h = test_phase(tuple, x, activation)?;
    let b = traversal_phase(tuple.bits(), &h)?;
    let p = selector.select(&b)?;
    let mut acc = 0.0;
    for (pi, model) in p.iter().zip(tuple.values()) {
        if *pi != 0.0 {
            let v = model
                .evaluate(x)?
                .as_real()
                .expect("regression leaves are real");
            acc += pi * v;
        }
    }
    Ok(acc)
}
