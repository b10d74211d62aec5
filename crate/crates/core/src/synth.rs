//! Labelled Gaussian-blob datasets for desk-scale experiments.
//!
//! Cluster `c` is centred at `s * e_(c mod dims) + 10 * (c div dims) * 1`
//! with `s = 10 / sqrt(2)`, so any two centers are at least 10 apart. Points
//! have unit variance per axis. Outliers are uniform in the bounding box of
//! the cluster points scaled by 3 about its midpoint and carry label 1.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::data::FeatureMatrix;
use crate::{rng_from, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthParams {
    pub clusters: usize,
    pub per_cluster: usize,
    pub outliers: usize,
    pub dims: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    /// The benchmark layout: 2 clusters of 150, 10 outliers, 8 dimensions.
    fn default() -> Self {
        Self {
            clusters: 2,
            per_cluster: 150,
            outliers: 10,
            dims: 8,
            seed: 0,
        }
    }
}

/// A generated dataset: row-major features and 0/1 labels (1 = outlier).
#[derive(Clone, Debug, PartialEq)]
pub struct Blobs {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Blobs {
    pub fn matrix(&self) -> FeatureMatrix {
        FeatureMatrix::from_numeric_rows(&self.rows).expect("generated rows are rectangular")
    }

    /// Header `f0,...,f{d-1},label`; values in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let dims = self.rows.first().map_or(0, Vec::len);
        let mut out: String = (0..dims).map(|j| format!("f{j},")).collect();
        out.push_str("label\n");
        for (row, label) in self.rows.iter().zip(&self.labels) {
            for v in row {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{label}\n"));
        }
        out
    }
}

pub fn cluster_center(c: usize, dims: usize) -> Vec<f64> {
    let side = 10.0 / std::f64::consts::SQRT_2;
    let shift = 10.0 * (c / dims) as f64;
    let mut center = vec![shift; dims];
    center[c % dims] += side;
    center
}

pub fn gaussian_blobs(p: &SynthParams) -> Result<Blobs> {
    if p.clusters == 0 || p.per_cluster == 0 || p.dims == 0 {
        return Err(Error::Config(
            "clusters, per-cluster and dims must all be at least 1".into(),
        ));
    }
    if p.clusters * p.per_cluster + p.outliers < 2 {
        return Err(Error::Config("dataset would have fewer than 2 rows".into()));
    }
    let mut rng = rng_from(p.seed);
    let mut rows = Vec::with_capacity(p.clusters * p.per_cluster + p.outliers);
    for c in 0..p.clusters {
        let center = cluster_center(c, p.dims);
        for _ in 0..p.per_cluster {
            rows.push(
                center
                    .iter()
                    .map(|&m| m + rng.sample::<f64, _>(StandardNormal))
                    .collect::<Vec<f64>>(),
            );
        }
    }
    let bounds: Vec<(f64, f64)> = (0..p.dims)
        .map(|j| {
            let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            let mid = (lo + hi) / 2.0;
            let half = 1.5 * (hi - lo);
            (mid - half, mid + half)
        })
        .collect();
    for _ in 0..p.outliers {
        rows.push(
            bounds
                .iter()
                .map(|&(lo, hi)| {
                    if hi > lo {
                        rng.random_range(lo..hi)
                    } else {
                        lo
                    }
                })
                .collect(),
        );
    }
    let mut labels = vec![0u8; p.clusters * p.per_cluster];
    labels.extend(std::iter::repeat_n(1u8, p.outliers));
    Ok(Blobs { rows, labels })
}
