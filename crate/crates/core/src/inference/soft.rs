//! Relaxations of first-argmax onto the probability simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `exp(b_i / T) / sum_j exp(b_j / T)`, stabilized by subtracting the max.
pub fn softmax_select(b: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!(
            "softmax temperature must be finite and > 0, got {temperature}"
        )));
    }
    if b.is_empty() {
        return Err(Error::Input("softmax of an empty vector".into()));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("softmax input must be finite".into()));
    }
    let max = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = b.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / z).collect())
}

fn check_weights(z: &[f64], w: &[f64]) -> Result<()> {
    if z.is_empty() || z.len() != w.len() {
        return Err(Error::Input(format!(
            "sparsemax needs matching nonempty z and w, got {} and {}",
            z.len(),
            w.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("sparsemax input must be finite".into()));
    }
    if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Config(
            "sparsemax weights must be finite and > 0".into(),
        ));
    }
    if w.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::Config(
            "sparsemax weights must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

fn project(z: &[f64], w: &[f64], lambda: f64) -> Vec<f64> {
    z.iter()
        .zip(w)
        .map(|(&zi, &wi)| (zi - lambda / (2.0 * wi)).max(0.0))
        .collect()
}

/// Weighted projection onto the simplex:
/// `argmin_p sum_i w_i (p_i - z_i)^2` subject to `p >= 0, sum p = 1`.
///
/// The solution is `p_i = max(0, z_i - lambda / (2 w_i))`; the multiplier is
/// returned alongside `p`.
pub fn weighted_sparsemax_with_multiplier(z: &[f64], w: &[f64]) -> Result<(Vec<f64>, f64)> {
    check_weights(z, w)?;
    let sum_at = |lambda: f64| project(z, w, lambda).iter().sum::<f64>();

    // At `lo` some coordinate alone reaches 1; at `hi` every coordinate is 0.
    let mut lo = z
        .iter()
        .zip(w)
        .map(|(&zi, &wi)| 2.0 * wi * (zi - 1.0))
        .fold(f64::INFINITY, f64::min);
    let mut hi = z
        .iter()
        .zip(w)
        .map(|(&zi, &wi)| 2.0 * wi * zi)
        .fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = sum_at(mid);
        if (s - 1.0).abs() <= 1e-15 {
            lo = mid;
            hi = mid;
            break;
        }
        if s > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lambda = 0.5 * (lo + hi);

    // Closed form on the support: sum_S (z_i - lambda / (2 w_i)) = 1.
    for _ in 0..z.len() {
        let p = project(z, w, lambda);
        let (mut sz, mut sc) = (0.0, 0.0);
        for i in (0..z.len()).filter(|&i| p[i] > 0.0) {
            sz += z[i];
            sc += 1.0 / (2.0 * w[i]);
        }
        if sc == 0.0 {
            break;
        }
        let next = (sz - 1.0) / sc;
        if next == lambda {
            break;
        }
        let better = (sum_at(next) - 1.0).abs() <= (sum_at(lambda) - 1.0).abs();
        if !better {
            break;
        }
        lambda = next;
    }
    Ok((project(z, w, lambda), lambda))
}

pub fn weighted_sparsemax(z: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    weighted_sparsemax_with_multiplier(z, w).map(|(p, _)| p)
}

/// `w_i = 1 / i` for `i = 1..=len`.
pub fn harmonic_weights(len: usize) -> Vec<f64> {
    (1..=len).map(|i| 1.0 / i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SoftSelector {
    Softmax {
        temperature: f64,
    },
    /// Empty weights mean harmonic weights sized to the input.
    WeightedSparsemax {
        weights: Vec<f64>,
    },
}

impl SoftSelector {
    pub fn select(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            SoftSelector::Softmax { temperature } => softmax_select(b, *temperature),
            SoftSelector::WeightedSparsemax { weights } if weights.is_empty() => {
                weighted_sparsemax(b, &harmonic_weights(b.len()))
            }
            SoftSelector::WeightedSparsemax { weights } => weighted_sparsemax(b, weights),
        }
    }
}
