//! Density / distance scoring over a clustered distance matrix.
//!
//! For point `i` in cluster `C` with cutoff `d_c`:
//!
//! * `alpha_i = 1 + |{ j in C, j != i : D(i, j) < d_c }|`
//! * `beta_i` = mean distance from `i` to the cluster centers denser than
//!   `i`, or the largest distance to any center when none is denser
//! * `A_i = beta_i / alpha_i`
//!
//! Points are flagged when `A_i` exceeds `exp(mean + z * std) - 1` taken over
//! `ln(A + 1)`.

use serde::Serialize;

use crate::data::{generate_synthetic, label_real_vs_synthetic, FeatureMatrix};
use crate::forest::{build_forest, distance_matrix, DistanceMatrix, ForestParams};
use crate::graph::{cluster_centers, default_k, detect_communities, knn_graph, Clustering};
use crate::{derive_seed, par, Error, Result};

/// Nearest-rank percentile: the value at rank `ceil(p/100 * n)` of the
/// sorted values (0 for an empty slice).
pub fn nearest_rank(values: &[f64], percentile: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((percentile / 100.0 * sorted.len() as f64) - 1e-9).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Nearest-rank percentile of the within-cluster pairwise distances.
/// Clusters with fewer than two members give 0.
pub fn cluster_dc(members: &[usize], d: &DistanceMatrix, percentile: f64) -> f64 {
    let mut pairs = Vec::with_capacity(members.len() * members.len().saturating_sub(1) / 2);
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            pairs.push(d.get(i, j));
        }
    }
    nearest_rank(&pairs, percentile)
}

/// Fill every cluster's `d_c` from one global percentile.
pub fn assign_cutoffs(clustering: &mut Clustering, d: &DistanceMatrix, percentile: f64) {
    let cutoffs = par::map_slice(clustering.clusters(), |c| {
        cluster_dc(&c.members, d, percentile)
    });
    for (c, dc) in cutoffs.into_iter().enumerate() {
        clustering.set_d_c(c, dc);
    }
}

/// One plus the number of co-cluster points strictly closer than `d_c`.
pub fn density(i: usize, clustering: &Clustering, d: &DistanceMatrix) -> usize {
    let cluster = clustering.cluster_of(i);
    1 + cluster
        .members
        .iter()
        .filter(|&&j| j != i && d.get(i, j) < cluster.d_c)
        .count()
}

pub fn densities(clustering: &Clustering, d: &DistanceMatrix) -> Vec<usize> {
    par::map_range(d.len(), |i| density(i, clustering, d))
}

/// Mean distance from `i` to the centers with strictly higher density; the
/// maximum distance to any center if there are none.
pub fn distance_param(
    i: usize,
    clustering: &Clustering,
    alphas: &[usize],
    d: &DistanceMatrix,
) -> f64 {
    let mut sum = 0.0;
    let mut denser = 0usize;
    let mut farthest = 0.0f64;
    for c in clustering.clusters() {
        let dist = d.get(i, c.center);
        farthest = farthest.max(dist);
        if alphas[c.center] > alphas[i] {
            sum += dist;
            denser += 1;
        }
    }
    if denser > 0 {
        sum / denser as f64
    } else {
        farthest
    }
}

pub fn distance_params(clustering: &Clustering, alphas: &[usize], d: &DistanceMatrix) -> Vec<f64> {
    par::map_range(d.len(), |i| distance_param(i, clustering, alphas, d))
}

/// `beta / alpha` per point.
pub fn anomaly_scores(alphas: &[usize], betas: &[f64]) -> Vec<f64> {
    alphas
        .iter()
        .zip(betas)
        .map(|(&a, &b)| b / a as f64)
        .collect()
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Log-space z-score cutoff: `exp(mean + z * std) - 1` over `ln(A + 1)`.
///
/// A constant score set returns that constant.
pub fn threshold(scores: &[f64], z: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    if scores.iter().all(|&s| s == scores[0]) {
        return scores[0];
    }
    let logged: Vec<f64> = scores.iter().map(|s| s.ln_1p()).collect();
    let (mean, std) = mean_std(&logged);
    (mean + z * std).exp_m1()
}

/// Min-max scaling to `[0, 1]`; all zeros when the scores are constant.
pub fn normalize(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| (s - lo) / (hi - lo)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreConfig {
    pub trees: usize,
    pub mtry: Option<usize>,
    pub max_depth: usize,
    /// 0 selects `ceil(ln N)`.
    pub k: usize,
    pub dc_percentile: f64,
    pub z: f64,
    pub seed: u64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            mtry: None,
            max_depth: 0,
            k: 0,
            dc_percentile: 20.0,
            z: 2.5,
            seed: 0,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::Config("trees must be at least 1".into()));
        }
        if !(self.dc_percentile > 0.0 && self.dc_percentile < 100.0) {
            return Err(Error::Config(format!(
                "dc percentile {} outside (0, 100)",
                self.dc_percentile
            )));
        }
        if !(self.z > 0.0 && self.z.is_finite()) {
            return Err(Error::Config(format!("z = {} must be positive", self.z)));
        }
        Ok(())
    }

    /// Neighbour count for `n` points.
    pub fn k_for(&self, n: usize) -> usize {
        if self.k == 0 {
            default_k(n)
        } else {
            self.k
        }
    }
}

/// Per-point scores plus the clustering they were computed from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreReport {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub z: f64,
    pub threshold: f64,
    pub alpha: Vec<usize>,
    pub beta: Vec<f64>,
    pub score: Vec<f64>,
    pub score_norm: Vec<f64>,
    pub flags: Vec<bool>,
    pub clustering: Clustering,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub n: usize,
    pub k: usize,
    #[serde(rename = "K")]
    pub clusters: usize,
    pub d_c: Vec<f64>,
    pub threshold: f64,
    pub z: f64,
    pub seed: u64,
    pub flagged_count: usize,
}

impl ScoreReport {
    pub fn flagged_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn summary(&self) -> ScoreSummary {
        ScoreSummary {
            n: self.n,
            k: self.k,
            clusters: self.clustering.len(),
            d_c: self.clustering.clusters().iter().map(|c| c.d_c).collect(),
            threshold: self.threshold,
            z: self.z,
            seed: self.seed,
            flagged_count: self.flagged_count(),
        }
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serializes") + "\n"
    }

    /// `index,alpha,beta,score,score_norm,flag`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,alpha,beta,score,score_norm,flag\n");
        for i in 0..self.n {
            out.push_str(&format!(
                "{i},{},{},{},{},{}\n",
                self.alpha[i], self.beta[i], self.score[i], self.score_norm[i], self.flags[i] as u8
            ));
        }
        out
    }
}

/// Score a fixed clustering whose cutoffs are already assigned.
pub fn score_clustering(
    clustering: Clustering,
    d: &DistanceMatrix,
    k: usize,
    z: f64,
    seed: u64,
) -> ScoreReport {
    let alpha = densities(&clustering, d);
    let beta = distance_params(&clustering, &alpha, d);
    let score = anomaly_scores(&alpha, &beta);
    let cut = threshold(&score, z);
    ScoreReport {
        n: d.len(),
        k,
        seed,
        z,
        threshold: cut,
        flags: score.iter().map(|&s| s > cut).collect(),
        score_norm: normalize(&score),
        alpha,
        beta,
        score,
        clustering,
    }
}

/// Everything after the distance matrix: KNN graph, communities, medoids,
/// cutoffs and scores.
pub fn score_distances(d: &DistanceMatrix, config: &ScoreConfig) -> Result<ScoreReport> {
    config.validate()?;
    let k = config.k_for(d.len());
    let graph = knn_graph(d, k)?;
    let labels = detect_communities(&graph, derive_seed(config.seed, 3));
    let mut clustering = cluster_centers(&labels, d)?;
    assign_cutoffs(&mut clustering, d, config.dc_percentile);
    Ok(score_clustering(clustering, d, k, config.z, config.seed))
}

/// Forest distance matrix for `x` under `config` (synthetic contrast data
/// and forest seeds are derived from `config.seed`).
pub fn forest_distances(x: &FeatureMatrix, config: &ScoreConfig) -> Result<DistanceMatrix> {
    config.validate()?;
    let synthetic = generate_synthetic(x, derive_seed(config.seed, 1));
    let data = label_real_vs_synthetic(x, &synthetic)?;
    let params = ForestParams {
        trees: config.trees,
        mtry: config.mtry,
        max_depth: config.max_depth,
        seed: derive_seed(config.seed, 2),
    };
    let forest = build_forest(&data, &params)?;
    Ok(distance_matrix(&forest, x)?)
}

/// The full detector: contrast data, forest, distances, graph, communities,
/// density, distance, score, threshold.
pub fn score_pipeline(x: &FeatureMatrix, config: &ScoreConfig) -> Result<ScoreReport> {
    let d = forest_distances(x, config)?;
    score_distances(&d, config)
}
