//! Randomized self-check: compiles fuzzed trees and checks backend
//! agreement, structure-matrix properties and document round-trips.
//!
//! A failure is shrunk by collapsing subtrees while it persists and is
//! packaged as a [`Reproducer`] that fails again when replayed.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::generate::{generate_random_tree, random_input, rng_from_seed, GeneratorParams};
use crate::inference::{predict_bitwise, predict_matrix, predict_ternary, Activation};
use crate::io::{from_document_str, to_document_string, Model};
use crate::schema::FeatureVector;
use crate::tensorize::{
    compile, sum_product_form, ternary_form, tuples_equivalent, Ordering, TreeTuple,
};
use crate::tree::{evaluate_classic, DecisionTree, Node, TestFunction};
use crate::validate::{check_complement_pairs, check_four_rules, decode_structure, rank_exact};

pub const REPRODUCER_VERSION: &str = "arbo-repro/1";

/// A bit of `B` to flip after compiling, taken modulo the matrix size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corruption {
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCheckConfig {
    pub seed: u64,
    pub count: usize,
    pub max_leaves: usize,
    pub inputs_per_tree: usize,
    pub corruption: Option<Corruption>,
}

impl Default for SelfCheckConfig {
    fn default() -> Self {
        SelfCheckConfig {
            seed: 1,
            count: 100,
            max_leaves: 16,
            inputs_per_tree: 16,
            corruption: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub property: String,
    pub detail: String,
}

/// Everything needed to re-run a failing check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reproducer {
    pub format_version: String,
    pub property: String,
    pub detail: String,
    pub seed: u64,
    pub tree_index: usize,
    pub corruption: Option<Corruption>,
    pub inputs: Vec<FeatureVector>,
    /// A `tree` model document.
    pub tree: Value,
}

impl Reproducer {
    pub fn to_json_string(&self) -> Result<String> {
        let value = serde_json::to_value(self).map_err(|e| Error::Input(e.to_string()))?;
        crate::io::to_canonical_string(&value)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let r: Reproducer =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        if r.format_version != REPRODUCER_VERSION {
            return Err(Error::Version(r.format_version));
        }
        Ok(r)
    }

    pub fn decision_tree(&self) -> Result<DecisionTree> {
        let text =
            serde_json::to_string(&self.tree).map_err(|e| Error::Malformed(e.to_string()))?;
        match from_document_str(&text)? {
            Model::Tree(t) => Ok(t),
            other => Err(Error::Malformed(format!(
                "reproducer holds a {} document, expected a tree",
                other.kind()
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureSummary {
    pub property: String,
    pub detail: String,
    pub tree_index: usize,
    pub leaves_before_shrink: usize,
    pub leaves_after_shrink: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfCheckReport {
    pub config: SelfCheckConfig,
    pub trees_checked: usize,
    pub inputs_checked: usize,
    pub passed: bool,
    pub failure: Option<FailureSummary>,
    #[serde(skip)]
    pub reproducer: Option<Reproducer>,
}

/// Generator settings for the `k`-th fuzzed tree. Cycles through axis-only
/// trees (which also exercise the sum-product form), integer thresholds
/// (inputs landing on boundaries) and mixed test types.
fn params_for(k: usize) -> GeneratorParams {
    match k % 4 {
        0 => GeneratorParams::default(),
        1 => GeneratorParams {
            integer_thresholds: true,
            ..GeneratorParams::default()
        },
        2 => GeneratorParams::mixed(),
        _ => GeneratorParams {
            composed_prob: 0.1,
            ..GeneratorParams::mixed()
        },
    }
}

fn fail(property: &str, detail: impl Into<String>) -> Option<Finding> {
    Some(Finding {
        property: property.into(),
        detail: detail.into(),
    })
}

fn is_axis_only(tree: &DecisionTree) -> bool {
    tree.nodes().iter().all(|n| match n {
        Node::Internal { test, .. } => test.is_axis(),
        Node::Leaf { .. } => true,
    })
}

fn on_boundary(tree: &DecisionTree, x: &FeatureVector) -> bool {
    tree.nodes().iter().any(|n| match n {
        Node::Internal {
            test: TestFunction::Axis { feature, threshold },
            ..
        } => x.numeric[*feature] == *threshold,
        _ => false,
    })
}

fn structure_properties(tuple: &TreeTuple, tree: &DecisionTree) -> Option<Finding> {
    let b = tuple.bits();
    let n = tuple.n_internal();
    let report = match check_four_rules(b) {
        Ok(r) => r,
        Err(e) => return fail("validator-lemmas", e.to_string()),
    };
    if !report.valid {
        let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return fail(
            "validator-lemmas",
            format!("compiled B rejected: {}", msgs.join("; ")),
        );
    }
    if report.rank != n {
        return fail(
            "validator-lemmas",
            format!("rank {} for {n} columns", report.rank),
        );
    }
    let crank = rank_exact(&b.complement());
    if crank != n {
        return fail(
            "validator-lemmas",
            format!("complement rank {crank} for {n} columns"),
        );
    }
    if !report.augmented_det_nonzero {
        return fail("validator-lemmas", "[B | 1] is singular");
    }
    if !check_complement_pairs(b) {
        return fail("validator-lemmas", "two columns are complements");
    }
    match decode_structure(b) {
        Ok(s) if s.shape() == tree.shape() => None,
        Ok(_) => fail("round-trip", "decoded shape differs from the tree"),
        Err(e) => fail("round-trip", e.to_string()),
    }
}

fn document_properties(tuple: &TreeTuple, tree: &DecisionTree) -> Option<Finding> {
    for m in [Model::Tree(tree.clone()), Model::Tuple(tuple.clone())] {
        let back = to_document_string(&m).and_then(|s| from_document_str(&s));
        match back {
            Ok(b) if b == m => {}
            Ok(_) => {
                return fail(
                    "round-trip",
                    format!("{} document reloads differently", m.kind()),
                )
            }
            Err(e) => return fail("round-trip", format!("{} document: {e}", m.kind())),
        }
    }
    match compile(tree, Ordering::Preorder) {
        Ok(pre) => match tuples_equivalent(tuple, &pre) {
            crate::tensorize::Equivalence::Equivalent => None,
            crate::tensorize::Equivalence::Different(why) => fail(
                "round-trip",
                format!("preorder compile not equivalent: {why}"),
            ),
        },
        Err(e) => fail("round-trip", e.to_string()),
    }
}

fn backend_properties(
    tuple: &TreeTuple,
    tree: &DecisionTree,
    inputs: &[FeatureVector],
) -> Option<Finding> {
    let ternary = ternary_form(tuple);
    let sum_product = if is_axis_only(tree) {
        sum_product_form(tree).ok()
    } else {
        None
    };
    for (k, x) in inputs.iter().enumerate() {
        let want = match evaluate_classic(tree, x) {
            Ok(o) => o,
            Err(e) => return fail("backend-equivalence", format!("input {k}: classic: {e}")),
        };
        let got = [
            (
                "matrix",
                predict_matrix(tuple, x, &Activation::BinarizedRelu),
            ),
            ("matrix-relu", predict_matrix(tuple, x, &Activation::Relu)),
            ("bitwise", predict_bitwise(tuple, x)),
            ("ternary", predict_ternary(&ternary, x)),
        ];
        for (name, p) in got {
            match p {
                Ok(p) if p.leaf == want.leaf && p.value == want.value => {}
                Ok(p) => {
                    return fail(
                        "backend-equivalence",
                        format!(
                            "input {k}: {name} leaf {} vs classic leaf {}",
                            p.leaf, want.leaf
                        ),
                    )
                }
                Err(e) => return fail("backend-equivalence", format!("input {k}: {name}: {e}")),
            }
        }
        if let Some(form) = &sum_product {
            if !on_boundary(tree, x) {
                let want = want.value.as_real();
                match form.evaluate(x) {
                    Ok(v) if Some(v) == want => {}
                    Ok(v) => {
                        return fail(
                            "backend-equivalence",
                            format!("input {k}: sum-product {v} vs classic {want:?}"),
                        )
                    }
                    Err(e) => {
                        return fail(
                            "backend-equivalence",
                            format!("input {k}: sum-product: {e}"),
                        )
                    }
                }
            }
        }
    }
    None
}

/// Runs every property on one tree. Returns the first failure.
pub fn check_tree(
    tree: &DecisionTree,
    corruption: Option<Corruption>,
    inputs: &[FeatureVector],
) -> Option<Finding> {
    let mut tuple = match compile(tree, Ordering::Bfs) {
        Ok(t) => t,
        Err(e) => return fail("compile", e.to_string()),
    };
    if let Some(c) = corruption {
        tuple = tuple.with_flipped_bit(c.row, c.col);
    }
    structure_properties(&tuple, tree)
        .or_else(|| document_properties(&tuple, tree))
        .or_else(|| backend_properties(&tuple, tree, inputs))
}

/// Smallest tree and input list found that still fail.
fn shrink(
    mut tree: DecisionTree,
    mut inputs: Vec<FeatureVector>,
    corruption: Option<Corruption>,
) -> (DecisionTree, Vec<FeatureVector>, Finding) {
    let mut finding = check_tree(&tree, corruption, &inputs).expect("shrink starts from a failure");
    if inputs.len() > 1 {
        for k in 0..inputs.len() {
            let one = vec![inputs[k].clone()];
            if let Some(f) = check_tree(&tree, corruption, &one) {
                inputs = one;
                finding = f;
                break;
            }
        }
    }
    'outer: loop {
        for id in 0..tree.nodes().len() {
            if id == tree.root() || matches!(tree.node(id), Node::Leaf { .. }) {
                continue;
            }
            let Ok(smaller) = tree.collapse(id) else {
                continue;
            };
            if let Some(f) = check_tree(&smaller, corruption, &inputs) {
                tree = smaller;
                finding = f;
                continue 'outer;
            }
        }
        break;
    }
    (tree, inputs, finding)
}

/// Runs the self-check over `config.count` fuzzed trees, stopping at the
/// first failure.
pub fn run_selfcheck(config: &SelfCheckConfig) -> Result<SelfCheckReport> {
    if config.count == 0 {
        return Err(Error::Config("selfcheck needs count >= 1".into()));
    }
    if config.max_leaves < 2 {
        return Err(Error::Config("selfcheck needs max_leaves >= 2".into()));
    }
    let mut rng = rng_from_seed(config.seed);
    let mut inputs_checked = 0;
    for k in 0..config.count {
        let n_leaves = rng.random_range(2..=config.max_leaves);
        let tree_seed: u64 = rng.random();
        let params = params_for(k);
        let tree = generate_random_tree(tree_seed, n_leaves, 3, &params)?;
        let mut input_rng = rng_from_seed(tree_seed ^ 0x9e37_79b9_7f4a_7c15);
        let inputs: Vec<FeatureVector> = (0..config.inputs_per_tree)
            .map(|_| random_input(&mut input_rng, tree.schema(), &params))
            .collect();
        inputs_checked += inputs.len();
        if check_tree(&tree, config.corruption, &inputs).is_none() {
            continue;
        }
        let before = tree.n_leaves();
        let (small, inputs, finding) = shrink(tree, inputs, config.corruption);
        let doc = to_document_string(&Model::Tree(small.clone()))?;
        let reproducer = Reproducer {
            format_version: REPRODUCER_VERSION.into(),
            property: finding.property.clone(),
            detail: finding.detail.clone(),
            seed: config.seed,
            tree_index: k,
            corruption: config.corruption,
            inputs,
            tree: serde_json::from_str(&doc).map_err(|e| Error::Malformed(e.to_string()))?,
        };
        return Ok(SelfCheckReport {
            config: config.clone(),
            trees_checked: k + 1,
            inputs_checked,
            passed: false,
            failure: Some(FailureSummary {
                property: finding.property,
                detail: finding.detail,
                tree_index: k,
                leaves_before_shrink: before,
                leaves_after_shrink: small.n_leaves(),
            }),
            reproducer: Some(reproducer),
        });
    }
    Ok(SelfCheckReport {
        config: config.clone(),
        trees_checked: config.count,
        inputs_checked,
        passed: true,
        failure: None,
        reproducer: None,
    })
}

/// Re-runs the checks recorded in a reproducer.
pub fn replay(reproducer: &Reproducer) -> Result<Option<Finding>> {
    let tree = reproducer.decision_tree()?;
    Ok(check_tree(&tree, reproducer.corruption, &reproducer.inputs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_run_passes() {
        let report = run_selfcheck(&SelfCheckConfig {
            count: 40,
            ..SelfCheckConfig::default()
        })
        .unwrap();
        assert!(report.passed, "{:?}", report.failure);
        assert_eq!(report.trees_checked, 40);
    }

    #[test]
    fn smallest_tree_passes() {
        let report = run_selfcheck(&SelfCheckConfig {
            count: 1,
            max_leaves: 2,
            ..SelfCheckConfig::default()
        })
        .unwrap();
        assert!(report.passed);
    }

    #[test]
    fn corruption_fails_and_replays() {
        let report = run_selfcheck(&SelfCheckConfig {
            count: 5,
            corruption: Some(Corruption { row: 1, col: 0 }),
            ..SelfCheckConfig::default()
        })
        .unwrap();
        assert!(!report.passed);
        let summary = report.failure.unwrap();
        assert!(summary.leaves_after_shrink <= summary.leaves_before_shrink);
        let repro = report.reproducer.unwrap();
        let text = repro.to_json_string().unwrap();
        let back = Reproducer::from_json_str(&text).unwrap();
        assert_eq!(back, repro);
        let again = replay(&back).unwrap().expect("reproducer fails again");
        assert_eq!(again.property, repro.property);
    }

    #[test]
    fn bad_config() {
        for cfg in [
            SelfCheckConfig {
                count: 0,
                ..SelfCheckConfig::default()
            },
            SelfCheckConfig {
                max_leaves: 1,
                ..SelfCheckConfig::default()
            },
        ] {
            assert!(matches!(run_selfcheck(&cfg), Err(Error::Config(_))));
        }
    }
}
