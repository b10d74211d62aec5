//! Reference detectors in standardized Euclidean feature space: Isolation
//! Forest, distance to the k-th nearest neighbour, and Local Outlier Factor.
//! Higher scores are more anomalous throughout.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::Serialize;

use crate::data::{Column, FeatureMatrix};
use crate::graph::GraphError;
use crate::{derive_seed, par, rng_from, Rng};

/// Detectors known to the evaluation harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Method {
    Hybrid,
    IsolationForest,
    Knn,
    Lof,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Hybrid,
        Method::IsolationForest,
        Method::Knn,
        Method::Lof,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Method::Hybrid => "hybrid",
            Method::IsolationForest => "iforest",
            Method::Knn => "knn",
            Method::Lof => "lof",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected hybrid, iforest, knn or lof)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineScores {
    pub method: Method,
    pub scores: Vec<f64>,
}

/// Dense row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct NumericMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl NumericMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            rows: rows.len(),
            cols: self.cols,
            data: rows
                .iter()
                .flat_map(|&r| self.row(r).iter().copied())
                .collect(),
        }
    }
}

/// Numeric columns as-is, categorical columns one-hot encoded (one
/// indicator per alphabet symbol).
pub fn encode_numeric(x: &FeatureMatrix) -> NumericMatrix {
    let n = x.n_rows();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for col in x.columns() {
        match col {
            Column::Numeric(v) => columns.push(v.clone()),
            Column::Categorical { levels, codes } => {
                for level in 0..levels.len() as u32 {
                    columns.push(codes.iter().map(|&c| (c == level) as u8 as f64).collect());
                }
            }
        }
    }
    let cols = columns.len();
    let mut data = Vec::with_capacity(n * cols);
    for i in 0..n {
        data.extend(columns.iter().map(|c| c[i]));
    }
    NumericMatrix {
        rows: n,
        cols,
        data,
    }
}

/// Per-column z-scores with the population standard deviation; constant
/// columns become 0.
pub fn standardize(x: &NumericMatrix) -> NumericMatrix {
    let n = x.rows as f64;
    let mut out = x.clone();
    for j in 0..x.cols {
        let mean = (0..x.rows).map(|i| x.get(i, j)).sum::<f64>() / n;
        let var = (0..x.rows)
            .map(|i| (x.get(i, j) - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        for i in 0..x.rows {
            out.data[i * x.cols + j] = if std > 0.0 {
                (x.get(i, j) - mean) / std
            } else {
                0.0
            };
        }
    }
    out
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// For every point, the other points sorted by (distance, index).
fn sorted_neighbours(x: &NumericMatrix) -> Vec<Vec<(f64, usize)>> {
    par::map_range(x.rows, |i| {
        let mut others: Vec<(f64, usize)> = (0..x.rows)
            .filter(|&j| j != i)
            .map(|j| (euclidean(x.row(i), x.row(j)), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        others
    })
}

fn check_k(k: usize, n: usize) -> Result<(), GraphError> {
    if k == 0 {
        Err(GraphError::ZeroK)
    } else if k + 1 > n {
        Err(GraphError::KTooLarge { k, n })
    } else {
        Ok(())
    }
}

/// Distance to the k-th nearest other point.
pub fn knn_outlier_scores(x: &NumericMatrix, k: usize) -> Result<BaselineScores, GraphError> {
    check_k(k, x.rows)?;
    let scores = sorted_neighbours(x).iter().map(|nb| nb[k - 1].0).collect();
    Ok(BaselineScores {
        method: Method::Knn,
        scores,
    })
}

/// Added to the mean reachability distance so duplicate clusters get a large
/// but finite density.
const LRD_FLOOR: f64 = 1e-10;

/// Local Outlier Factor. The k-neighbourhood includes every point tied with
/// the k-th nearest distance.
pub fn lof_scores(x: &NumericMatrix, k: usize) -> Result<BaselineScores, GraphError> {
    check_k(k, x.rows)?;
    let sorted = sorted_neighbours(x);
    let k_distance: Vec<f64> = sorted.iter().map(|nb| nb[k - 1].0).collect();
    let hoods: Vec<&[(f64, usize)]> = sorted
        .iter()
        .zip(&k_distance)
        .map(|(nb, &kd)| {
            let len = nb.partition_point(|&(d, _)| d <= kd);
            &nb[..len]
        })
        .collect();

    let lrd: Vec<f64> = hoods
        .iter()
        .map(|hood| {
            let reach: f64 = hood.iter().map(|&(d, o)| d.max(k_distance[o])).sum();
            1.0 / (reach / hood.len() as f64 + LRD_FLOOR)
        })
        .collect();

    let scores = hoods
        .iter()
        .enumerate()
        .map(|(p, hood)| {
            hood.iter().map(|&(_, o)| lrd[o]).sum::<f64>() / hood.len() as f64 / lrd[p]
        })
        .collect();
    Ok(BaselineScores {
        method: Method::Lof,
        scores,
    })
}

/// Average unsuccessful-search path length in a binary search tree of `n`
/// keys.
pub fn average_path_length(n: usize) -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

enum INode {
    Split {
        feature: usize,
        value: f64,
        left: Box<INode>,
        right: Box<INode>,
    },
    External {
        size: usize,
    },
}

impl INode {
    fn grow(
        x: &NumericMatrix,
        rows: Vec<usize>,
        depth: usize,
        limit: usize,
        rng: &mut Rng,
    ) -> INode {
        if depth >= limit || rows.len() <= 1 {
            return INode::External { size: rows.len() };
        }
        let ranges: Vec<(usize, f64, f64)> = (0..x.cols)
            .filter_map(|j| {
                let (lo, hi) = rows
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                        (lo.min(x.get(r, j)), hi.max(x.get(r, j)))
                    });
                (hi > lo).then_some((j, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return INode::External { size: rows.len() };
        }
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let value = rng.random_range(lo..hi);
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| x.get(i, feature) < value);
        INode::Split {
            feature,
            value,
            left: Box::new(INode::grow(x, l, depth + 1, limit, rng)),
            right: Box::new(INode::grow(x, r, depth + 1, limit, rng)),
        }
    }

    fn path_length(&self, point: &[f64]) -> f64 {
        let mut node = self;
        let mut depth = 0.0;
        loop {
            match node {
                INode::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    node = if point[*feature] < *value {
                        left
                    } else {
                        right
                    };
                    depth += 1.0;
                }
                INode::External { size } => return depth + average_path_length(*size),
            }
        }
    }
}

/// Isolation Forest anomaly scores `2^(-E[h(x)] / c(subsample))`.
///
/// Each tree is grown on `subsample` rows drawn without replacement, to a
/// depth limit of `ceil(log2 subsample)`, with a random feature (among those
/// not constant in the node) and a uniform random split value.
pub fn isolation_forest_scores(
    x: &NumericMatrix,
    trees: usize,
    subsample: usize,
    seed: u64,
) -> BaselineScores {
    let n = x.rows;
    let psi = subsample.clamp(1, n.max(1));
    let limit = (psi as f64).log2().ceil() as usize;
    let forest: Vec<INode> = par::map_range(trees.max(1), |t| {
        let mut rng = rng_from(derive_seed(seed, t as u64));
        let rows = rand::seq::index::sample(&mut rng, n, psi).into_vec();
        INode::grow(x, rows, 0, limit, &mut rng)
    });
    let norm = average_path_length(psi).max(f64::MIN_POSITIVE);
    let scores = par::map_range(n, |i| {
        let mean =
            forest.iter().map(|t| t.path_length(x.row(i))).sum::<f64>() / forest.len() as f64;
        2f64.powf(-mean / norm)
    });
    BaselineScores {
        method: Method::IsolationForest,
        scores,
    }
}
