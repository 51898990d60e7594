//! Model documents (`*.arbo.json`) and CSV datasets.
//!
//! A document is one JSON object holding a format version, the feature
//! schema and a payload tagged by `kind`: `tree`, `tuple`, `ternary`,
//! `ensemble` or `matrix` (a bare structure matrix, without schema).
//! Documents are written in a canonical form, so saving the same model
//! twice gives identical bytes.

mod canonical;
mod csv;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use self::csv::{load_dataset_csv, read_dataset_csv, save_dataset_csv, write_dataset_csv};
pub use canonical::to_canonical_string;

use crate::bits::BitMatrix;
use crate::ensemble::{Aggregation, EnsembleModel};
use crate::error::{Error, Result};
use crate::schema::{FeatureDef, FeatureSchema};
use crate::tensorize::{TernaryTuple, TreeTuple, TupleParts};
use crate::tree::{DecisionTree, LeafModel, LeafValue, Node, NodeId, TestFunction};
use crate::validate::check_four_rules;

pub const FORMAT_VERSION: &str = "arbo/1";

/// Any model a document can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Tree(DecisionTree),
    Tuple(TreeTuple),
    Ternary(TernaryTuple),
    Ensemble(EnsembleModel),
    /// A structure matrix on its own, without tests or values.
    Matrix(BitMatrix),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Tree(_) => "tree",
            Model::Tuple(_) => "tuple",
            Model::Ternary(_) => "ternary",
            Model::Ensemble(_) => "ensemble",
            Model::Matrix(_) => "matrix",
        }
    }

    pub fn schema(&self) -> Option<&FeatureSchema> {
        match self {
            Model::Tree(t) => Some(t.schema()),
            Model::Tuple(t) => Some(t.schema()),
            Model::Ternary(t) => Some(t.schema()),
            Model::Ensemble(e) => Some(e.schema()),
            Model::Matrix(_) => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Document {
    format_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema: Option<SchemaDoc>,
    payload: Payload,
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    features: Vec<FeatureDef>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Payload {
    Tree(TreeDoc),
    Tuple(TupleDoc),
    Ternary(TernaryDoc),
    Ensemble(EnsembleDoc),
    Matrix(MatrixDoc),
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    root: NodeId,
    nodes: Vec<NodeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum NodeDoc {
    Internal {
        test: TestDoc,
        left: NodeId,
        right: NodeId,
    },
    Leaf {
        leaf: LeafDoc,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum TestDoc {
    Axis {
        feature: usize,
        threshold: f64,
    },
    Categorical {
        feature: usize,
        accepted: Vec<u32>,
    },
    Oblique {
        weights: Vec<f64>,
        offset: f64,
    },
    /// The inner model is a tuple reading the document's schema.
    Composed {
        model: Box<TupleDoc>,
        threshold: f64,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LeafDoc {
    Real { value: f64 },
    Class { class: u32 },
    Linear { weights: Vec<f64>, offset: f64 },
}

#[derive(Serialize, Deserialize)]
struct TupleDoc {
    selection: Vec<Vec<f64>>,
    thresholds: Vec<f64>,
    /// Rows of `B` as strings of '0' and '1'.
    bits: Vec<String>,
    values: Vec<LeafDoc>,
    internal_order: Vec<NodeId>,
    leaf_order: Vec<NodeId>,
    test_bank: Vec<Option<TestDoc>>,
}

#[derive(Serialize, Deserialize)]
struct TernaryDoc {
    /// `[S | -t]`.
    augmented: Vec<Vec<f64>>,
    pattern: Vec<Vec<i8>>,
    norms: Vec<u32>,
    values: Vec<LeafDoc>,
    internal_order: Vec<NodeId>,
    leaf_order: Vec<NodeId>,
    test_bank: Vec<Option<TestDoc>>,
}

#[derive(Serialize, Deserialize)]
struct EnsembleDoc {
    aggregation: Aggregation,
    weights: Vec<f64>,
    trees: Vec<TupleDoc>,
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    bits: Vec<String>,
}

// ---- model -> document ----

fn leaf_doc(m: &LeafModel) -> LeafDoc {
    match m {
        LeafModel::Constant(LeafValue::Real(value)) => LeafDoc::Real { value: *value },
        LeafModel::Constant(LeafValue::Class(class)) => LeafDoc::Class { class: *class },
        LeafModel::Linear { weights, offset } => LeafDoc::Linear {
            weights: weights.clone(),
            offset: *offset,
        },
    }
}

fn test_doc(t: &TestFunction) -> TestDoc {
    match t {
        TestFunction::Axis { feature, threshold } => TestDoc::Axis {
            feature: *feature,
            threshold: *threshold,
        },
        TestFunction::Categorical { feature, accepted } => TestDoc::Categorical {
            feature: *feature,
            accepted: accepted.iter().copied().collect(),
        },
        TestFunction::Oblique { weights, offset } => TestDoc::Oblique {
            weights: weights.clone(),
            offset: *offset,
        },
        TestFunction::Composed { model, threshold } => TestDoc::Composed {
            model: Box::new(tuple_doc(model)),
            threshold: *threshold,
        },
    }
}

fn rows_of(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn tuple_doc(t: &TreeTuple) -> TupleDoc {
    TupleDoc {
        selection: rows_of(t.selection()),
        thresholds: t.thresholds().to_vec(),
        bits: t.bits().to_row_strings(),
        values: t.values().iter().map(leaf_doc).collect(),
        internal_order: t.internal_order().to_vec(),
        leaf_order: t.leaf_order().to_vec(),
        test_bank: t
            .test_bank()
            .iter()
            .map(|o| o.as_ref().map(test_doc))
            .collect(),
    }
}

fn tree_doc(t: &DecisionTree) -> TreeDoc {
    let nodes = t
        .nodes()
        .iter()
        .map(|n| match n {
            Node::Internal { test, left, right } => NodeDoc::Internal {
                test: test_doc(test),
                left: *left,
                right: *right,
            },
            Node::Leaf { model } => NodeDoc::Leaf {
                leaf: leaf_doc(model),
            },
        })
        .collect();
    TreeDoc {
        root: t.root(),
        nodes,
    }
}

fn ternary_doc(t: &TernaryTuple) -> TernaryDoc {
    TernaryDoc {
        augmented: rows_of(t.augmented()),
        pattern: t.pattern().rows().into_iter().map(|r| r.to_vec()).collect(),
        norms: t.norms().to_vec(),
        values: t.values().iter().map(leaf_doc).collect(),
        internal_order: t.internal_order().to_vec(),
        leaf_order: t.leaf_order().to_vec(),
        test_bank: t
            .test_bank()
            .iter()
            .map(|o| o.as_ref().map(test_doc))
            .collect(),
    }
}

fn document(model: &Model) -> Document {
    let (schema, payload) = match model {
        Model::Tree(t) => (Some(t.schema()), Payload::Tree(tree_doc(t))),
        Model::Tuple(t) => (Some(t.schema()), Payload::Tuple(tuple_doc(t))),
        Model::Ternary(t) => (Some(t.schema()), Payload::Ternary(ternary_doc(t))),
        Model::Ensemble(e) => (
            Some(e.schema()),
            Payload::Ensemble(EnsembleDoc {
                aggregation: e.aggregation(),
                weights: e.weights().to_vec(),
                trees: e.trees().iter().map(tuple_doc).collect(),
            }),
        ),
        Model::Matrix(b) => (
            None,
            Payload::Matrix(MatrixDoc {
                bits: b.to_row_strings(),
            }),
        ),
    };
    Document {
        format_version: FORMAT_VERSION.to_string(),
        schema: schema.map(|s| SchemaDoc {
            features: s.features().to_vec(),
        }),
        payload,
    }
}

// ---- document -> model ----

fn leaf_model(d: LeafDoc) -> LeafModel {
    match d {
        LeafDoc::Real { value } => LeafModel::real(value),
        LeafDoc::Class { class } => LeafModel::class(class),
        LeafDoc::Linear { weights, offset } => LeafModel::Linear { weights, offset },
    }
}

fn test_function(d: TestDoc, schema: &FeatureSchema) -> Result<TestFunction> {
    Ok(match d {
        TestDoc::Axis { feature, threshold } => TestFunction::Axis { feature, threshold },
        TestDoc::Categorical { feature, accepted } => TestFunction::Categorical {
            feature,
            accepted: accepted.into_iter().collect(),
        },
        TestDoc::Oblique { weights, offset } => TestFunction::Oblique { weights, offset },
        TestDoc::Composed { model, threshold } => TestFunction::Composed {
            model: Arc::new(tuple_from(*model, schema)?),
            threshold,
        },
    })
}

fn matrix_from_rows<T: Clone>(rows: Vec<Vec<T>>, n_cols: usize, what: &str) -> Result<Array2<T>> {
    let n_rows = rows.len();
    if let Some(i) = rows.iter().position(|r| r.len() != n_cols) {
        return Err(Error::Dimension(format!(
            "{what} row {i} has {} entries, expected {n_cols}",
            rows[i].len()
        )));
    }
    let flat: Vec<T> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n_rows, n_cols), flat).expect("row lengths checked"))
}

fn test_bank(
    docs: Vec<Option<TestDoc>>,
    schema: &FeatureSchema,
) -> Result<Vec<Option<TestFunction>>> {
    docs.into_iter()
        .map(|o| o.map(|d| test_function(d, schema)).transpose())
        .collect()
}

fn tuple_from(d: TupleDoc, schema: &FeatureSchema) -> Result<TreeTuple> {
    let selection = matrix_from_rows(d.selection, schema.n_numeric(), "selection")?;
    TreeTuple::from_parts(TupleParts {
        schema: schema.clone(),
        selection,
        thresholds: d.thresholds,
        bits: BitMatrix::from_row_strings(&d.bits)?,
        values: d.values.into_iter().map(leaf_model).collect(),
        internal_order: d.internal_order,
        leaf_order: d.leaf_order,
        test_bank: test_bank(d.test_bank, schema)?,
    })
}

fn tree_from(d: TreeDoc, schema: &FeatureSchema) -> Result<DecisionTree> {
    let nodes = d
        .nodes
        .into_iter()
        .map(|n| {
            Ok(match n {
                NodeDoc::Internal { test, left, right } => Node::Internal {
                    test: test_function(test, schema)?,
                    left,
                    right,
                },
                NodeDoc::Leaf { leaf } => Node::Leaf {
                    model: leaf_model(leaf),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DecisionTree::from_nodes(nodes, d.root, schema.clone())
}

fn ternary_from(d: TernaryDoc, schema: &FeatureSchema) -> Result<TernaryTuple> {
    let n_internal = d.augmented.len();
    let augmented = matrix_from_rows(d.augmented, schema.n_numeric() + 1, "augmented")?;
    let pattern = matrix_from_rows(d.pattern, n_internal, "pattern")?;
    let t = TernaryTuple::from_parts(
        schema.clone(),
        augmented,
        pattern,
        d.values.into_iter().map(leaf_model).collect(),
        d.internal_order,
        d.leaf_order,
        test_bank(d.test_bank, schema)?,
    )?;
    if t.norms() != d.norms.as_slice() {
        return Err(Error::Input(
            "stored norms differ from the L1 norms of the pattern rows".into(),
        ));
    }
    Ok(t)
}

fn model_from(doc: Document) -> Result<Model> {
    let schema = match doc.schema {
        Some(s) => Some(FeatureSchema::new(s.features)?),
        None => None,
    };
    let need = |schema: Option<FeatureSchema>| {
        schema.ok_or_else(|| Error::Malformed("document has no schema".into()))
    };
    Ok(match doc.payload {
        Payload::Tree(d) => Model::Tree(tree_from(d, &need(schema)?)?),
        Payload::Tuple(d) => Model::Tuple(tuple_from(d, &need(schema)?)?),
        Payload::Ternary(d) => Model::Ternary(ternary_from(d, &need(schema)?)?),
        Payload::Ensemble(d) => {
            let schema = need(schema)?;
            let trees = d
                .trees
                .into_iter()
                .map(|t| tuple_from(t, &schema))
                .collect::<Result<Vec<_>>>()?;
            Model::Ensemble(EnsembleModel::new(schema, trees, d.weights, d.aggregation)?)
        }
        Payload::Matrix(d) => {
            let b = BitMatrix::from_row_strings(&d.bits)?;
            let report = check_four_rules(&b)?;
            if !report.valid {
                return Err(Error::InvalidStructure(report.violations));
            }
            Model::Matrix(b)
        }
    })
}

/// Parses the JSON and checks the format version before anything else.
fn parse_document(text: &str) -> Result<Document> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
    match value.get("format_version") {
        Some(Value::String(v)) if v == FORMAT_VERSION => {}
        Some(Value::String(v)) => return Err(Error::Version(v.clone())),
        Some(other) => return Err(Error::Version(other.to_string())),
        None => return Err(Error::Malformed("missing `format_version`".into())),
    }
    serde_json::from_value(value).map_err(|e| Error::Malformed(e.to_string()))
}

// ---- public surface ----

/// Canonical document text for `model`.
pub fn to_document_string(model: &Model) -> Result<String> {
    let value = serde_json::to_value(document(model)).map_err(|e| Error::Input(e.to_string()))?;
    to_canonical_string(&value)
}

/// Parses and validates a document. Tuple-like payloads pass the
/// structure-matrix checks before they are returned.
pub fn from_document_str(text: &str) -> Result<Model> {
    model_from(parse_document(text)?)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = to_document_string(model)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_document_str(&text)
}

/// Reads the structure matrix of a `matrix`, `tuple` or `ternary` document
/// without validating it, so that invalid matrices can be diagnosed.
pub fn load_bit_matrix(path: impl AsRef<Path>) -> Result<BitMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match parse_document(&text)?.payload {
        Payload::Matrix(d) => BitMatrix::from_row_strings(&d.bits),
        Payload::Tuple(d) => BitMatrix::from_row_strings(&d.bits),
        Payload::Ternary(d) => {
            let n = d.augmented.len();
            let pattern = matrix_from_rows(d.pattern, n, "pattern")?;
            BitMatrix::new(pattern.mapv(|v| u8::from(v != -1)))
        }
        Payload::Tree(_) | Payload::Ensemble(_) => Err(Error::Input(
            "document holds no single structure matrix".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{counterexample_bits, figure_one_bits, figure_one_tree};
    use crate::generate::{generate_random_tree, GeneratorParams};
    use crate::tensorize::{compile, ternary_form, Ordering};

    fn round_trip(m: &Model) -> Model {
        from_document_str(&to_document_string(m).unwrap()).unwrap()
    }

    #[test]
    fn figure_one_round_trips_in_every_form() {
        let tree = figure_one_tree();
        let tuple = compile(&tree, Ordering::Bfs).unwrap();
        for m in [
            Model::Tree(tree.clone()),
            Model::Tuple(tuple.clone()),
            Model::Ternary(ternary_form(&tuple)),
            Model::Ensemble(
                EnsembleModel::sum(tree.schema().clone(), vec![tuple.clone(), tuple]).unwrap(),
            ),
            Model::Matrix(figure_one_bits()),
        ] {
            assert_eq!(round_trip(&m), m, "{}", m.kind());
        }
    }

    #[test]
    fn bits_are_row_strings() {
        let tuple = compile(&figure_one_tree(), Ordering::Bfs).unwrap();
        let text = to_document_string(&Model::Tuple(tuple)).unwrap();
        assert!(text.contains(r#""bits": ["00101", "00110", "00111", "01111", "11011", "11111"]"#));
    }

    #[test]
    fn mixed_trees_round_trip_and_saves_are_identical() {
        let params = GeneratorParams {
            composed_prob: 0.15,
            leaf_kind: crate::generate::LeafKind::Linear,
            ..GeneratorParams::mixed()
        };
        for seed in 0..20 {
            let tree = generate_random_tree(seed, 12, 3, &params).unwrap();
            let m = Model::Tuple(compile(&tree, Ordering::Preorder).unwrap());
            let a = to_document_string(&m).unwrap();
            let back = from_document_str(&a).unwrap();
            assert_eq!(back, m);
            assert_eq!(to_document_string(&back).unwrap(), a);
            assert_eq!(round_trip(&Model::Tree(tree.clone())), Model::Tree(tree));
        }
    }

    #[test]
    fn error_kinds_are_distinct() {
        let good = to_document_string(&Model::Matrix(figure_one_bits())).unwrap();
        let truncated = &good[..good.len() / 2];
        assert!(matches!(
            from_document_str(truncated),
            Err(Error::Malformed(_))
        ));
        let other = good.replace(FORMAT_VERSION, "arbo/99");
        assert!(matches!(from_document_str(&other), Err(Error::Version(v)) if v == "arbo/99"));
        let bad = to_document_string(&Model::Matrix(counterexample_bits())).unwrap();
        assert!(matches!(
            from_document_str(&bad),
            Err(Error::InvalidStructure(_))
        ));
        let no_schema = good.replace("\"matrix\"", "\"tuple\"");
        assert!(matches!(
            from_document_str(&no_schema),
            Err(Error::Malformed(_))
        ));
    }

    #[test]
    fn io_errors_carry_the_path() {
        let err = load_model("/definitely/not/here.arbo.json").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.arbo.json"));
        assert!(err.is_input_error());
    }

    #[test]
    fn raw_matrix_loads_without_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cx.arbo.json");
        save_model(&Model::Matrix(figure_one_bits()), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap().replace("00101", "00001");
        fs::write(&path, text).unwrap();
        assert!(load_model(&path).is_err());
        assert_eq!(load_bit_matrix(&path).unwrap().get(0, 2), 0);
    }
}
