//! Per-backend precomputed scoring structures.

use crate::error::{Error, Result};
use crate::inference::{predict_soft, predict_ternary, Activation, SoftSelector};
use crate::schema::FeatureVector;
use crate::tensorize::{sum_product_form, ternary_form, SumProductForm, TernaryTuple, TreeTuple};
use crate::tree::{classic_leaf, DecisionTree, LeafModel, LeafValue, TestFunction};

use super::{aggregate, Backend, EnsembleModel, EnsembleOutput};

/// Activation and selector used by the matrix and soft backends.
#[derive(Debug, Clone)]
pub struct ScorerOptions {
    pub activation: Activation,
    pub selector: SoftSelector,
}

impl Default for ScorerOptions {
    fn default() -> Self {
        ScorerOptions {
            activation: Activation::BinarizedRelu,
            selector: SoftSelector::Softmax { temperature: 1.0 },
        }
    }
}

/// Margin of one internal node.
#[derive(Debug, Clone)]
enum NodeTest {
    /// Sparse row of `S` and its threshold.
    Linear {
        index: Vec<usize>,
        weight: Vec<f64>,
        threshold: f64,
    },
    Bank(TestFunction),
}

impl NodeTest {
    #[inline]
    fn margin(&self, x: &FeatureVector) -> Result<f64> {
        match self {
            NodeTest::Linear {
                index,
                weight,
                threshold,
            } => {
                let mut acc = 0.0;
                for (&k, &w) in index.iter().zip(weight) {
                    acc += w * x.numeric[k];
                }
                Ok(acc - threshold)
            }
            NodeTest::Bank(t) => t.margin(x),
        }
    }
}

/// One tree for the matrix backend: sparse `S`, column-major `B`.
#[derive(Debug, Clone)]
struct MatrixTree {
    tests: Vec<NodeTest>,
    columns: Vec<f64>,
    n_leaves: usize,
    values: Vec<LeafModel>,
}

impl MatrixTree {
    fn new(t: &TreeTuple) -> Self {
        let tests = (0..t.n_internal())
            .map(|j| match &t.test_bank()[j] {
                Some(test) => NodeTest::Bank(test.clone()),
                None => {
                    let row = t.selection_row(j);
                    let index: Vec<usize> = (0..row.len()).filter(|&k| row[k] != 0.0).collect();
                    let weight = index.iter().map(|&k| row[k]).collect();
                    NodeTest::Linear {
                        index,
                        weight,
                        threshold: t.thresholds()[j],
                    }
                }
            })
            .collect();
        let n_leaves = t.n_leaves();
        let mut columns = Vec::with_capacity(n_leaves * t.n_internal());
        for j in 0..t.n_internal() {
            columns.extend(t.bits().column(j).iter().map(|&b| f64::from(b)));
        }
        MatrixTree {
            tests,
            columns,
            n_leaves,
            values: t.values().to_vec(),
        }
    }

    fn leaf(&self, x: &FeatureVector, act: &Activation, scores: &mut [f64]) -> Result<usize> {
        let scores = &mut scores[..self.n_leaves];
        scores.fill(0.0);
        for (j, test) in self.tests.iter().enumerate() {
            let h = act.apply(test.margin(x)?);
            if h != 0.0 {
                let col = &self.columns[j * self.n_leaves..(j + 1) * self.n_leaves];
                for (s, &b) in scores.iter_mut().zip(col) {
                    *s += h * b;
                }
            }
        }
        let mut best = 0;
        for i in 1..scores.len() {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

/// All trees' axis tests grouped by feature and sorted by threshold, so a
/// row is scored by scanning each feature's thresholds below its value and
/// ANDing the corresponding leaf masks (QuickScorer-style).
#[derive(Debug, Clone)]
struct Interleaved {
    /// Per feature: ascending thresholds and, in parallel, the owning tree
    /// and the offset of the column mask in `masks`.
    thresholds: Vec<Vec<f64>>,
    owners: Vec<Vec<(u32, u32)>>,
    masks: Vec<u64>,
    /// Tests that are not axis-aligned: (tree, mask offset, test).
    fallback: Vec<(usize, usize, TestFunction)>,
    tree_offset: Vec<usize>,
    tree_words: Vec<usize>,
    initial: Vec<u64>,
    values: Vec<Vec<LeafModel>>,
}

impl Interleaved {
    fn new(model: &EnsembleModel) -> Self {
        let n_features = model.schema().n_numeric();
        let mut entries: Vec<Vec<(f64, u32, u32)>> = vec![Vec::new(); n_features];
        let mut masks = Vec::new();
        let mut fallback = Vec::new();
        let (mut tree_offset, mut tree_words, mut initial) = (Vec::new(), Vec::new(), Vec::new());
        for (k, t) in model.trees().iter().enumerate() {
            let packed = t.packed_columns();
            let words = t.n_leaves().div_ceil(64);
            tree_offset.push(initial.len());
            tree_words.push(words);
            initial.extend_from_slice(crate::bits::PackedBits::ones(t.n_leaves()).words());
            for (j, column) in packed.iter().enumerate() {
                let offset = masks.len();
                masks.extend_from_slice(column.words());
                match t.column_test(j) {
                    TestFunction::Axis { feature, threshold } => {
                        entries[feature].push((threshold, k as u32, offset as u32));
                    }
                    other => fallback.push((k, offset, other)),
                }
            }
        }
        let mut thresholds = Vec::with_capacity(n_features);
        let mut owners = Vec::with_capacity(n_features);
        for mut e in entries {
            // Stable sort keeps tree order among equal thresholds.
            e.sort_by(|a, b| a.0.total_cmp(&b.0));
            thresholds.push(e.iter().map(|x| x.0).collect());
            owners.push(e.iter().map(|x| (x.1, x.2)).collect());
        }
        Interleaved {
            thresholds,
            owners,
            masks,
            fallback,
            tree_offset,
            tree_words,
            initial,
            values: model.trees().iter().map(|t| t.values().to_vec()).collect(),
        }
    }

    fn and_into(&self, state: &mut [u64], tree: usize, offset: usize) {
        let base = self.tree_offset[tree];
        for w in 0..self.tree_words[tree] {
            state[base + w] &= self.masks[offset + w];
        }
    }

    fn leaves(&self, x: &FeatureVector, state: &mut Vec<u64>, out: &mut Vec<usize>) -> Result<()> {
        state.clear();
        state.extend_from_slice(&self.initial);
        for (f, ts) in self.thresholds.iter().enumerate() {
            let v = x.numeric[f];
            // Tests with threshold < v fail.
            let end = ts.partition_point(|&t| t < v);
            for &(tree, offset) in &self.owners[f][..end] {
                self.and_into(state, tree as usize, offset as usize);
            }
        }
        for (tree, offset, test) in &self.fallback {
            if test.margin(x)? > 0.0 {
                self.and_into(state, *tree, *offset);
            }
        }
        out.clear();
        for (k, &base) in self.tree_offset.iter().enumerate() {
            let words = &state[base..base + self.tree_words[k]];
            let leaf = words
                .iter()
                .enumerate()
                .find(|(_, &w)| w != 0)
                .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
                .ok_or_else(|| {
                    Error::Validation(format!("no leaf of tree {k} survives the mask"))
                })?;
            out.push(leaf);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Engine {
    Classic(Vec<DecisionTree>),
    Matrix(Vec<MatrixTree>),
    Bitwise(Interleaved),
    Ternary(Vec<TernaryTuple>),
    SumProduct(Vec<SumProductForm>),
    Soft,
}

/// Rows scored together, tree by tree, by the tree-major engines.
const BLOCK_ROWS: usize = 256;

/// Per-thread scratch buffers.
#[derive(Debug, Default)]
struct Scratch {
    scores: Vec<f64>,
    state: Vec<u64>,
    leaves: Vec<usize>,
    values: Vec<LeafValue>,
}

/// An ensemble prepared for repeated scoring with one backend.
#[derive(Debug, Clone)]
pub struct EnsembleScorer<'m> {
    model: &'m EnsembleModel,
    backend: Backend,
    options: ScorerOptions,
    engine: Engine,
    max_leaves: usize,
}

impl<'m> EnsembleScorer<'m> {
    pub fn new(model: &'m EnsembleModel, backend: Backend, options: ScorerOptions) -> Result<Self> {
        let engine = match backend {
            Backend::Classic => Engine::Classic(
                model
                    .trees()
                    .iter()
                    .map(TreeTuple::to_tree)
                    .collect::<Result<_>>()?,
            ),
            Backend::Matrix => Engine::Matrix(model.trees().iter().map(MatrixTree::new).collect()),
            Backend::Bitwise => Engine::Bitwise(Interleaved::new(model)),
            Backend::Ternary => Engine::Ternary(model.trees().iter().map(ternary_form).collect()),
            Backend::SumProduct => Engine::SumProduct(
                model
                    .trees()
                    .iter()
                    .map(|t| sum_product_form(&t.to_tree()?))
                    .collect::<Result<_>>()?,
            ),
            Backend::Soft => {
                if model.trees().iter().any(|t| !t.is_regression()) {
                    return Err(Error::Unsupported(
                        "soft scoring needs numeric leaves".into(),
                    ));
                }
                Engine::Soft
            }
        };
        Ok(EnsembleScorer {
            model,
            backend,
            options,
            engine,
            max_leaves: model
                .trees()
                .iter()
                .map(TreeTuple::n_leaves)
                .max()
                .unwrap_or(0),
        })
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// How the backend walks trees and rows, recorded in bench reports.
    pub fn iteration_order(&self) -> &'static str {
        match self.engine {
            Engine::Bitwise(_) => "interleaved: per row, all trees' masks per feature",
            Engine::Matrix(_) => "per row, tree by tree: sparse S x - t, column-major B h",
            Engine::Classic(_) => "per row, tree by tree: root-to-leaf traversal",
            Engine::Ternary(_) => "per row, tree by tree: sign pattern matching",
            Engine::SumProduct(_) => "per row, tree by tree: sum of step products",
            Engine::Soft => "per row, tree by tree: soft leaf selection",
        }
    }

    pub fn score(&self, x: &FeatureVector) -> Result<EnsembleOutput> {
        self.score_with(x, &mut Scratch::default())
    }

    /// Leaf and output of tree `k` for engines that score tree by tree.
    #[inline]
    fn tree_leaf(
        &self,
        k: usize,
        x: &FeatureVector,
        s: &mut Scratch,
    ) -> Result<(usize, LeafValue)> {
        match &self.engine {
            Engine::Classic(ts) => {
                let (leaf, model) = classic_leaf(&ts[k], x)?;
                Ok((leaf, model.evaluate(x)?))
            }
            Engine::Matrix(ts) => {
                let t = &ts[k];
                let leaf = t.leaf(x, &self.options.activation, &mut s.scores)?;
                Ok((leaf, t.values[leaf].evaluate(x)?))
            }
            Engine::Ternary(ts) => {
                let p = predict_ternary(&ts[k], x)?;
                Ok((p.leaf, p.value))
            }
            Engine::Bitwise(_) | Engine::SumProduct(_) | Engine::Soft => {
                unreachable!("engine does not score tree by tree")
            }
        }
    }

    fn tree_major(&self) -> bool {
        matches!(
            self.engine,
            Engine::Classic(_) | Engine::Matrix(_) | Engine::Ternary(_)
        )
    }

    fn output(&self, values: &[LeafValue], leaves: &[usize]) -> EnsembleOutput {
        let value = if values.is_empty() {
            LeafValue::Real(0.0)
        } else {
            aggregate(self.model, values)
        };
        EnsembleOutput {
            value,
            leaves: self.backend.is_hard().then(|| leaves.to_vec()),
        }
    }

    fn score_with(&self, x: &FeatureVector, s: &mut Scratch) -> Result<EnsembleOutput> {
        self.model.schema().check(x)?;
        let trees = self.model.trees();
        s.leaves.clear();
        s.values.clear();
        s.scores.resize(self.max_leaves, 0.0);
        if self.tree_major() {
            for k in 0..trees.len() {
                let (leaf, value) = self.tree_leaf(k, x, s)?;
                s.leaves.push(leaf);
                s.values.push(value);
            }
            return Ok(self.output(&s.values, &s.leaves));
        }
        match &self.engine {
            Engine::Bitwise(il) => {
                il.leaves(x, &mut s.state, &mut s.leaves)?;
                for (k, &leaf) in s.leaves.iter().enumerate() {
                    s.values.push(il.values[k][leaf].evaluate(x)?);
                }
            }
            Engine::SumProduct(fs) => {
                for f in fs {
                    s.values.push(LeafValue::Real(f.evaluate(x)?));
                }
            }
            Engine::Soft => {
                for t in trees {
                    let v = predict_soft(t, x, &self.options.activation, &self.options.selector)?;
                    s.values.push(LeafValue::Real(v));
                }
            }
            Engine::Classic(_) | Engine::Matrix(_) | Engine::Ternary(_) => {
                unreachable!("handled above")
            }
        }
        Ok(self.output(&s.values, &s.leaves))
    }

    /// Scores a block of rows. Engines that evaluate trees independently run
    /// tree by tree over the whole block so each tree's data stays in cache.
    fn score_block(
        &self,
        rows: &[FeatureVector],
        start: usize,
        s: &mut Scratch,
    ) -> Result<Vec<EnsembleOutput>> {
        let row_error = |i: usize| {
            move |e: Error| Error::Row {
                row: start + i,
                message: e.to_string(),
            }
        };
        if !self.tree_major() {
            return rows
                .iter()
                .enumerate()
                .map(|(i, x)| self.score_with(x, s).map_err(row_error(i)))
                .collect();
        }
        for (i, x) in rows.iter().enumerate() {
            self.model.schema().check(x).map_err(row_error(i))?;
        }
        let n_trees = self.model.len();
        let mut leaves = vec![0usize; rows.len() * n_trees];
        let mut values = vec![LeafValue::Real(0.0); rows.len() * n_trees];
        s.scores.resize(self.max_leaves, 0.0);
        for k in 0..n_trees {
            for (i, x) in rows.iter().enumerate() {
                let (leaf, value) = self.tree_leaf(k, x, s).map_err(row_error(i))?;
                leaves[i * n_trees + k] = leaf;
                values[i * n_trees + k] = value;
            }
        }
        Ok((0..rows.len())
            .map(|i| {
                let span = i * n_trees..(i + 1) * n_trees;
                self.output(&values[span.clone()], &leaves[span])
            })
            .collect())
    }

    /// Scores `rows` split into contiguous chunks over `workers` threads.
    pub fn score_rows(
        &self,
        rows: &[FeatureVector],
        workers: usize,
    ) -> Result<Vec<EnsembleOutput>> {
        let workers = workers.clamp(1, rows.len().max(1));
        let chunk = rows.len().div_ceil(workers).max(1);
        let score_chunk = |start: usize, part: &[FeatureVector]| -> Result<Vec<EnsembleOutput>> {
            let mut scratch = Scratch::default();
            let mut out = Vec::with_capacity(part.len());
            for (b, block) in part.chunks(BLOCK_ROWS).enumerate() {
                out.extend(self.score_block(block, start + b * BLOCK_ROWS, &mut scratch)?);
            }
            Ok(out)
        };
        if workers == 1 {
            return score_chunk(0, rows);
        }
        let parts: Vec<Result<Vec<EnsembleOutput>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = rows
                .chunks(chunk)
                .enumerate()
                .map(|(c, part)| {
                    let score_chunk = &score_chunk;
                    scope.spawn(move || score_chunk(c * chunk, part))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scoring thread panicked"))
                .collect()
        });
        let mut out = Vec::with_capacity(rows.len());
        for part in parts {
            out.extend(part?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_random_tree, random_input, rng_from_seed, GeneratorParams};
    use crate::tensorize::{compile, Ordering};

    fn random_model(seed: u64, n_trees: usize, params: &GeneratorParams) -> EnsembleModel {
        let trees: Vec<TreeTuple> = (0..n_trees)
            .map(|k| {
                let t = generate_random_tree(seed + k as u64, 2 + (k * 7) % 70, 3, params).unwrap();
                compile(&t, Ordering::Bfs).unwrap()
            })
            .collect();
        EnsembleModel::sum(params.schema(3), trees).unwrap()
    }

    #[test]
    fn backends_agree_on_mixed_trees() {
        let params = GeneratorParams {
            composed_prob: 0.05,
            ..GeneratorParams::mixed()
        };
        let model = random_model(5, 20, &params);
        let mut rng = rng_from_seed(9);
        let rows: Vec<_> = (0..200)
            .map(|_| random_input(&mut rng, model.schema(), &params))
            .collect();
        let classic = EnsembleScorer::new(&model, Backend::Classic, ScorerOptions::default())
            .unwrap()
            .score_rows(&rows, 1)
            .unwrap();
        for backend in [Backend::Matrix, Backend::Bitwise, Backend::Ternary] {
            let got = EnsembleScorer::new(&model, backend, ScorerOptions::default())
                .unwrap()
                .score_rows(&rows, 3)
                .unwrap();
            assert_eq!(got, classic, "{backend}");
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let model = random_model(1, 5, &GeneratorParams::default());
        let mut rng = rng_from_seed(2);
        let rows: Vec<_> = (0..97)
            .map(|_| random_input(&mut rng, model.schema(), &GeneratorParams::default()))
            .collect();
        let scorer =
            EnsembleScorer::new(&model, Backend::Bitwise, ScorerOptions::default()).unwrap();
        let one = scorer.score_rows(&rows, 1).unwrap();
        for w in [2, 8, 200] {
            assert_eq!(scorer.score_rows(&rows, w).unwrap(), one);
        }
    }

    #[test]
    fn bad_rows_are_reported_by_index() {
        let model = random_model(1, 2, &GeneratorParams::default());
        let mut rows = vec![FeatureVector::numeric(vec![0.0; 3]); 5];
        rows[3] = FeatureVector::numeric(vec![0.0; 2]);
        let scorer =
            EnsembleScorer::new(&model, Backend::Matrix, ScorerOptions::default()).unwrap();
        match scorer.score_rows(&rows, 2) {
            Err(Error::Row { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
