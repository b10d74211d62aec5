//! Unsupervised random forest and its tree-path distance.
//!
//! Trees are grown with entropy / information gain to separate real rows
//! from synthetic ones. Two points are similar in a tree when their routing
//! paths share many edges; the forest distance is
//! `sqrt(1 - (1/T) * sum_t S_t(i, j) / H_t)` where `S_t` is the number of
//! shared edges and `H_t` the tree height.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::Rng as _;
use serde::Serialize;
use thiserror::Error;

use crate::data::{Class, Column, FeatureMatrix, FeatureSchema, LabeledDataset};
use crate::{derive_seed, par, rng_from, Rng};

/// Splits must gain more than this to be taken; smaller gains are rounding.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("split leaves one side empty")]
    DegenerateSplit,
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("invalid distance matrix: {0}")]
    InvalidDistanceMatrix(String),
    #[error("matrix schema does not match the forest's training schema")]
    SchemaMismatch,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub n_real: usize,
    pub n_synth: usize,
}

impl ClassCounts {
    pub fn new(n_real: usize, n_synth: usize) -> Self {
        Self { n_real, n_synth }
    }

    pub fn total(&self) -> usize {
        self.n_real + self.n_synth
    }

    fn add(&mut self, class: Class) {
        match class {
            Class::Real => self.n_real += 1,
            Class::Synthetic => self.n_synth += 1,
        }
    }

    fn minus(&self, other: &ClassCounts) -> ClassCounts {
        ClassCounts::new(self.n_real - other.n_real, self.n_synth - other.n_synth)
    }

    fn is_pure(&self) -> bool {
        self.n_real == 0 || self.n_synth == 0
    }
}

/// Two-class Shannon entropy in bits, with `0 log 0 = 0`.
pub fn entropy(counts: ClassCounts) -> f64 {
    let total = counts.total() as f64;
    let h = |n: usize| {
        if n == 0 {
            0.0
        } else {
            let p = n as f64 / total;
            -p * p.log2()
        }
    };
    h(counts.n_real) + h(counts.n_synth)
}

fn gain(parent: ClassCounts, left: ClassCounts, right: ClassCounts) -> f64 {
    let total = parent.total() as f64;
    entropy(parent)
        - (left.total() as f64 / total) * entropy(left)
        - (right.total() as f64 / total) * entropy(right)
}

/// A binary test on one column.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SplitRule {
    /// Left iff `value < threshold`.
    NumericThreshold { feature: usize, threshold: f64 },
    /// Left iff the symbol is in `left_set`.
    CategorySubset {
        feature: usize,
        left_set: BTreeSet<String>,
    },
}

impl SplitRule {
    pub fn feature(&self) -> usize {
        match self {
            SplitRule::NumericThreshold { feature, .. }
            | SplitRule::CategorySubset { feature, .. } => *feature,
        }
    }

    pub fn goes_left(&self, x: &FeatureMatrix, row: usize) -> bool {
        match (self, x.column(self.feature())) {
            (SplitRule::NumericThreshold { threshold, .. }, Column::Numeric(v)) => {
                v[row] < *threshold
            }
            (SplitRule::CategorySubset { left_set, .. }, Column::Categorical { levels, codes }) => {
                left_set.contains(&levels[codes[row] as usize])
            }
            _ => panic!("split rule does not match column kind"),
        }
    }
}

/// Information gain of `split` over the subset `rows` of `data`.
pub fn information_gain(
    data: &LabeledDataset,
    rows: &[usize],
    split: &SplitRule,
) -> Result<f64, ForestError> {
    let mut parent = ClassCounts::default();
    let mut left = ClassCounts::default();
    for &r in rows {
        parent.add(data.labels[r]);
        if split.goes_left(&data.matrix, r) {
            left.add(data.labels[r]);
        }
    }
    let right = parent.minus(&left);
    if left.total() == 0 || right.total() == 0 {
        return Err(ForestError::DegenerateSplit);
    }
    Ok(gain(parent, left, right))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Node {
    Internal {
        split: SplitRule,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: ClassCounts,
    },
}

/// Arena-allocated binary tree; the root is node 0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    height: usize,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Longest root-to-leaf path, in edges.
    pub fn height(&self) -> usize {
        self.height
    }

    /// Node ids from the root to the leaf reached by `row` of `x`.
    pub fn route(&self, x: &FeatureMatrix, row: usize) -> Vec<usize> {
        let mut path = vec![0];
        let mut id = 0;
        while let Node::Internal { split, left, right } = &self.nodes[id] {
            id = if split.goes_left(x, row) {
                *left
            } else {
                *right
            };
            path.push(id);
        }
        path
    }

    /// Leaf reached by `row` of `x`.
    pub fn leaf(&self, x: &FeatureMatrix, row: usize) -> usize {
        *self.route(x, row).last().expect("route contains the root")
    }

    fn route_bits(&self, x: &FeatureMatrix, row: usize, out: &mut [u64]) -> u32 {
        out.fill(0);
        let mut id = 0;
        let mut depth = 0u32;
        while let Node::Internal { split, left, right } = &self.nodes[id] {
            if split.goes_left(x, row) {
                id = *left;
            } else {
                out[depth as usize / 64] |= 1 << (depth % 64);
                id = *right;
            }
            depth += 1;
        }
        depth
    }
}

/// Depth in edges of the deepest node shared by the routes of two records.
pub fn tree_similarity(
    tree: &DecisionTree,
    a: &FeatureMatrix,
    row_a: usize,
    b: &FeatureMatrix,
    row_b: usize,
) -> usize {
    let mut shared = 0;
    let mut id = 0;
    while let Node::Internal { split, left, right } = &tree.nodes[id] {
        let go_a = split.goes_left(a, row_a);
        if go_a != split.goes_left(b, row_b) {
            break;
        }
        id = if go_a { *left } else { *right };
        shared += 1;
    }
    shared
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForestParams {
    pub trees: usize,
    /// Candidate features per split; `None` means `ceil(sqrt(m))`.
    pub mtry: Option<usize>,
    /// 0 means unbounded.
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            mtry: None,
            max_depth: 0,
            seed: 0,
        }
    }
}

impl ForestParams {
    fn mtry_for(&self, m: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (m as f64).sqrt().ceil() as usize)
            .clamp(1, m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Forest {
    trees: Vec<DecisionTree>,
    params: ForestParams,
    schema: FeatureSchema,
}

impl Forest {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }
}

struct Candidate {
    gain: f64,
    rule: SplitRule,
}

struct TreeBuilder<'a> {
    data: &'a LabeledDataset,
    mtry: usize,
    max_depth: usize,
}

impl TreeBuilder<'_> {
    fn counts(&self, rows: &[usize]) -> ClassCounts {
        let mut c = ClassCounts::default();
        for &r in rows {
            c.add(self.data.labels[r]);
        }
        c
    }

    fn build(&self, rows: Vec<usize>, rng: &mut Rng) -> DecisionTree {
        let mut nodes = vec![Node::Leaf {
            counts: ClassCounts::default(),
        }];
        let mut height = 0;
        let mut stack = vec![(0usize, rows, 0usize)];
        while let Some((id, rows, depth)) = stack.pop() {
            let counts = self.counts(&rows);
            let at_limit = self.max_depth > 0 && depth >= self.max_depth;
            let best = if counts.is_pure() || at_limit {
                None
            } else {
                self.best_split(&rows, counts, rng)
            };
            match best {
                None => {
                    height = height.max(depth);
                    nodes[id] = Node::Leaf { counts };
                }
                Some(rule) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = rows
                        .iter()
                        .partition(|&&row| rule.goes_left(&self.data.matrix, row));
                    let left = nodes.len();
                    nodes.push(Node::Leaf {
                        counts: ClassCounts::default(),
                    });
                    nodes.push(Node::Leaf {
                        counts: ClassCounts::default(),
                    });
                    nodes[id] = Node::Internal {
                        split: rule,
                        left,
                        right: left + 1,
                    };
                    stack.push((left + 1, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        DecisionTree { nodes, height }
    }

    fn best_split(&self, rows: &[usize], parent: ClassCounts, rng: &mut Rng) -> Option<SplitRule> {
        let m = self.data.matrix.n_cols();
        let mut features = rand::seq::index::sample(rng, m, self.mtry).into_vec();
        features.sort_unstable();

        let mut best: Option<Candidate> = None;
        for f in features {
            let cand = match self.data.matrix.column(f) {
                Column::Numeric(values) => self.best_threshold(f, values, rows, parent),
                Column::Categorical { levels, codes } => {
                    self.best_category(f, levels, codes, rows, parent)
                }
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        best.filter(|c| c.gain > MIN_GAIN).map(|c| c.rule)
    }

    fn best_threshold(
        &self,
        feature: usize,
        values: &[f64],
        rows: &[usize],
        parent: ClassCounts,
    ) -> Option<Candidate> {
        let mut sorted: Vec<(f64, Class)> = rows
            .iter()
            .map(|&r| (values[r], self.data.labels[r]))
            .collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut best: Option<Candidate> = None;
        let mut left = ClassCounts::default();
        for w in 0..sorted.len() - 1 {
            left.add(sorted[w].1);
            let (lo, hi) = (sorted[w].0, sorted[w + 1].0);
            if lo == hi {
                continue;
            }
            let g = gain(parent, left, parent.minus(&left));
            if best.as_ref().is_none_or(|b| g > b.gain) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold <= lo {
                    threshold = hi;
                }
                best = Some(Candidate {
                    gain: g,
                    rule: SplitRule::NumericThreshold { feature, threshold },
                });
            }
        }
        best
    }

    fn best_category(
        &self,
        feature: usize,
        levels: &[String],
        codes: &[u32],
        rows: &[usize],
        parent: ClassCounts,
    ) -> Option<Candidate> {
        let mut per_code = vec![ClassCounts::default(); levels.len()];
        for &r in rows {
            per_code[codes[r] as usize].add(self.data.labels[r]);
        }
        let present = per_code.iter().filter(|c| c.total() > 0).count();
        if present < 2 {
            return None;
        }
        let mut best: Option<Candidate> = None;
        for (code, left) in per_code.iter().enumerate() {
            if left.total() == 0 {
                continue;
            }
            let g = gain(parent, *left, parent.minus(left));
            if best.as_ref().is_none_or(|b| g > b.gain) {
                best = Some(Candidate {
                    gain: g,
                    rule: SplitRule::CategorySubset {
                        feature,
                        left_set: BTreeSet::from([levels[code].clone()]),
                    },
                });
            }
        }
        best
    }
}

fn validate(params: &ForestParams, data: &LabeledDataset) -> Result<(), ForestError> {
    if params.trees == 0 {
        return Err(ForestError::InvalidParams("need at least one tree".into()));
    }
    if params.mtry == Some(0) {
        return Err(ForestError::InvalidParams("mtry must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(ForestError::InvalidParams("empty training set".into()));
    }
    Ok(())
}

/// Grow one tree on every row of `data`.
///
/// Each node draws `mtry` distinct features, scans all midpoint thresholds
/// (numeric) or one-vs-rest categories (categorical) and takes the highest
/// gain; ties go to the lowest feature, then the lowest threshold or
/// smallest category. Growth stops at pure nodes, zero gain or `max_depth`.
pub fn build_tree(
    data: &LabeledDataset,
    params: &ForestParams,
    tree_seed: u64,
) -> Result<DecisionTree, ForestError> {
    validate(params, data)?;
    let builder = TreeBuilder {
        data,
        mtry: params.mtry_for(data.matrix.n_cols()),
        max_depth: params.max_depth,
    };
    let mut rng = rng_from(tree_seed);
    Ok(builder.build((0..data.len()).collect(), &mut rng))
}

/// Grow `params.trees` trees, each on its own bootstrap of `data`. Tree `t`
/// draws everything from `derive_seed(params.seed, t)`.
pub fn build_forest(data: &LabeledDataset, params: &ForestParams) -> Result<Forest, ForestError> {
    validate(params, data)?;
    let builder = TreeBuilder {
        data,
        mtry: params.mtry_for(data.matrix.n_cols()),
        max_depth: params.max_depth,
    };
    let n = data.len();
    let trees = par::map_range(params.trees, |t| {
        let mut rng = rng_from(derive_seed(params.seed, t as u64));
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        builder.build(rows, &mut rng)
    });
    Ok(Forest {
        trees,
        params: params.clone(),
        schema: data.matrix.schema().clone(),
    })
}

/// Dense symmetric distance matrix with zero diagonal and entries in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Checks every invariant.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self, ForestError> {
        if values.len() != n * n {
            return Err(ForestError::InvalidDistanceMatrix(format!(
                "{} values for n = {n}",
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(ForestError::InvalidDistanceMatrix(format!(
                    "nonzero diagonal at {i}"
                )));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(ForestError::InvalidDistanceMatrix(format!(
                        "entry ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
                if v != values[j * n + i] {
                    return Err(ForestError::InvalidDistanceMatrix(format!(
                        "asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, values })
    }

    /// Build from the strict upper triangle given by `f(i, j)` for `i < j`.
    pub fn from_upper<F: Fn(usize, usize) -> f64>(n: usize, f: F) -> Result<Self, ForestError> {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self::new(n, values)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Restrict to `points`, in that order.
    pub fn submatrix(&self, points: &[usize]) -> DistanceMatrix {
        let k = points.len();
        let mut values = Vec::with_capacity(k * k);
        for &i in points {
            for &j in points {
                values.push(self.get(i, j));
            }
        }
        DistanceMatrix { n: k, values }
    }

    /// N lines of N comma-separated values, 17 significant digits each.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{v:.16e}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), ForestError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_csv().as_bytes())?;
        f.flush()?;
        Ok(())
    }
}

/// Routing paths of every row through one tree, as packed right-turn bits.
struct RoutedTree {
    height: usize,
    words: usize,
    bits: Vec<u64>,
    depth: Vec<u32>,
}

impl RoutedTree {
    fn new(tree: &DecisionTree, x: &FeatureMatrix) -> Self {
        let words = tree.height.div_ceil(64).max(1);
        let n = x.n_rows();
        let mut bits = vec![0u64; n * words];
        let depth = (0..n)
            .map(|r| tree.route_bits(x, r, &mut bits[r * words..(r + 1) * words]))
            .collect();
        Self {
            height: tree.height,
            words,
            bits,
            depth,
        }
    }

    #[inline]
    fn shared_edges(&self, i: usize, j: usize) -> u32 {
        let a = &self.bits[i * self.words..(i + 1) * self.words];
        let b = &self.bits[j * self.words..(j + 1) * self.words];
        let limit = self.depth[i].min(self.depth[j]);
        for (w, (x, y)) in a.iter().zip(b).enumerate() {
            let diff = x ^ y;
            if diff != 0 {
                return (w as u32 * 64 + diff.trailing_zeros()).min(limit);
            }
        }
        limit
    }
}

/// Forest distance between every pair of rows of `x`.
///
/// All rows are routed down every tree whether or not they were in its
/// bootstrap. Height-0 trees contribute a ratio of 0; the diagonal is 0.
pub fn distance_matrix(forest: &Forest, x: &FeatureMatrix) -> Result<DistanceMatrix, ForestError> {
    if x.schema() != forest.schema() {
        return Err(ForestError::SchemaMismatch);
    }
    let n = x.n_rows();
    let t = forest.trees.len() as f64;
    let routed = par::map_slice(&forest.trees, |tree| RoutedTree::new(tree, x));

    let rows: Vec<Vec<f64>> = par::map_range(n, |i| {
        (i + 1..n)
            .map(|j| {
                let mut sum = 0.0;
                for tree in &routed {
                    if tree.height > 0 {
                        sum += tree.shared_edges(i, j) as f64 / tree.height as f64;
                    }
                }
                (1.0 - sum / t).clamp(0.0, 1.0).sqrt()
            })
            .collect()
    });

    let mut values = vec![0.0; n * n];
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(DistanceMatrix { n, values })
}
