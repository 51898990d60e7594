//! Feature schemas and the input vectors they describe.
//!
//! Numeric and categorical features live in two separate arrays. A feature's
//! index inside a test function refers to its position among features of the
//! same kind, in schema order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical { vocabulary: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

/// Ordered list of named features.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureSchema {
    features: Vec<FeatureDef>,
    n_numeric: usize,
    vocab_sizes: Vec<usize>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Input(format!("duplicate feature name `{}`", f.name)));
            }
            if let FeatureKind::Categorical { vocabulary } = &f.kind {
                let mut words = std::collections::BTreeSet::new();
                if vocabulary.iter().any(|w| !words.insert(w.as_str())) {
                    return Err(Error::Input(format!(
                        "duplicate category in vocabulary of `{}`",
                        f.name
                    )));
                }
            }
        }
        let n_numeric = features
            .iter()
            .filter(|f| f.kind == FeatureKind::Numeric)
            .count();
        let vocab_sizes = features
            .iter()
            .filter_map(|f| match &f.kind {
                FeatureKind::Categorical { vocabulary } => Some(vocabulary.len()),
                FeatureKind::Numeric => None,
            })
            .collect();
        Ok(FeatureSchema {
            features,
            n_numeric,
            vocab_sizes,
        })
    }

    /// `n` numeric features named `f1..fn`.
    pub fn numeric(n: usize) -> Self {
        let features = (1..=n)
            .map(|i| FeatureDef {
                name: format!("f{i}"),
                kind: FeatureKind::Numeric,
            })
            .collect();
        FeatureSchema::new(features).expect("generated names are unique")
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn n_numeric(&self) -> usize {
        self.n_numeric
    }

    pub fn n_categorical(&self) -> usize {
        self.vocab_sizes.len()
    }

    /// Vocabulary size of the `k`-th categorical feature.
    pub fn vocabulary_size(&self, k: usize) -> Option<usize> {
        self.vocab_sizes.get(k).copied()
    }

    pub fn check(&self, x: &FeatureVector) -> Result<()> {
        if x.numeric.len() != self.n_numeric {
            return Err(Error::Schema(format!(
                "expected {} numeric features, got {}",
                self.n_numeric,
                x.numeric.len()
            )));
        }
        if x.categorical.len() != self.vocab_sizes.len() {
            return Err(Error::Schema(format!(
                "expected {} categorical features, got {}",
                self.vocab_sizes.len(),
                x.categorical.len()
            )));
        }
        if let Some(j) = x.numeric.iter().position(|v| !v.is_finite()) {
            return Err(Error::Schema(format!("numeric feature {j} is not finite")));
        }
        for (k, (&id, &size)) in x.categorical.iter().zip(&self.vocab_sizes).enumerate() {
            if id as usize >= size {
                return Err(Error::Schema(format!(
                    "category id {id} outside vocabulary of categorical feature {k} (size {size})"
                )));
            }
        }
        Ok(())
    }
}

/// One input sample.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub numeric: Vec<f64>,
    #[serde(default)]
    pub categorical: Vec<u32>,
}

impl FeatureVector {
    pub fn numeric(values: impl Into<Vec<f64>>) -> Self {
        FeatureVector {
            numeric: values.into(),
            categorical: Vec::new(),
        }
    }

    pub fn new(numeric: Vec<f64>, categorical: Vec<u32>) -> Self {
        FeatureVector {
            numeric,
            categorical,
        }
    }
}

/// Rows sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Vec<FeatureVector>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed() -> FeatureSchema {
        FeatureSchema::new(vec![
            FeatureDef {
                name: "age".into(),
                kind: FeatureKind::Numeric,
            },
            FeatureDef {
                name: "color".into(),
                kind: FeatureKind::Categorical {
                    vocabulary: vec!["red".into(), "green".into()],
                },
            },
        ])
        .unwrap()
    }

    #[test]
    fn counts_by_kind() {
        let s = mixed();
        assert_eq!(s.n_numeric(), 1);
        assert_eq!(s.n_categorical(), 1);
        assert_eq!(s.vocabulary_size(0), Some(2));
    }

    #[test]
    fn check_rejects_out_of_vocabulary_and_wrong_length() {
        let s = mixed();
        assert!(s.check(&FeatureVector::new(vec![1.0], vec![1])).is_ok());
        assert!(matches!(
            s.check(&FeatureVector::new(vec![1.0], vec![2])),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            s.check(&FeatureVector::numeric(vec![1.0])),
            Err(Error::Schema(_))
        ));
        assert!(s
            .check(&FeatureVector::new(vec![f64::NAN], vec![0]))
            .is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let f = FeatureDef {
            name: "a".into(),
            kind: FeatureKind::Numeric,
        };
        assert!(FeatureSchema::new(vec![f.clone(), f]).is_err());
    }
}
