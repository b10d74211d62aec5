//! AUC, method comparison, subsample stability and runtime measurement.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::baselines::{
    encode_numeric, isolation_forest_scores, knn_outlier_scores, lof_scores, standardize, Method,
};
use crate::data::{subsample, FeatureMatrix};
use crate::scoring::{mean_std, score_pipeline, ScoreConfig};
use crate::{derive_seed, par, Result};

/// Subsample draws tried before a one-class fraction is declared degenerate.
pub const SUBSAMPLE_ATTEMPTS: u64 = 100;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("labels contain only one class")]
    OneClassOnly,
    #[error("{labels} labels for {scores} scores")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("label {0} is not 0 or 1")]
    BadLabel(u8),
    #[error(
        "no two-class subsample at fraction {fraction} (seed {seed}) after {attempts} attempts"
    )]
    DegenerateSubsample {
        fraction: f64,
        seed: u64,
        attempts: u64,
    },
    #[error("repeats must be at least 1")]
    NoRepeats,
}

/// Area under the ROC curve via the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
/// Label 1 marks the positive (anomalous) class.
pub fn auc(labels: &[u8], scores: &[f64]) -> Result<f64, EvalError> {
    if labels.len() != scores.len() {
        return Err(EvalError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(EvalError::BadLabel(bad));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::OneClassOnly);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (1-based, tie-averaged) ranks of the positives, doubled to stay
    // in integers.
    let mut rank_sum2: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let positives = order[start..end]
            .iter()
            .filter(|&&i| labels[i] == 1)
            .count() as u128;
        // ranks start+1 ..= end; twice their mean is start + end + 1
        rank_sum2 += positives * (start + end + 1) as u128;
        start = end;
    }
    let (p, q) = (pos as u128, neg as u128);
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * q) as f64)
}

/// Settings for every method the harness can run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalConfig {
    pub score: ScoreConfig,
    pub iforest_trees: usize,
    /// Capped at N.
    pub iforest_subsample: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            score: ScoreConfig::default(),
            iforest_trees: 100,
            iforest_subsample: 256,
        }
    }
}

/// Anomaly scores of `method` on `x` (higher = more anomalous) using `seed`
/// in place of `config.score.seed`.
pub fn method_scores(
    method: Method,
    x: &FeatureMatrix,
    config: &EvalConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let score_config = ScoreConfig {
        seed,
        ..config.score.clone()
    };
    score_config.validate()?;
    let n = x.n_rows();
    let k = score_config.k_for(n);
    let features = || standardize(&encode_numeric(x));
    Ok(match method {
        Method::Hybrid => score_pipeline(x, &score_config)?.score,
        Method::IsolationForest => {
            isolation_forest_scores(
                &features(),
                config.iforest_trees,
                config.iforest_subsample.min(n),
                seed,
            )
            .scores
        }
        Method::Knn => knn_outlier_scores(&features(), k)?.scores,
        Method::Lof => lof_scores(&features(), k)?.scores,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRow {
    pub method: Method,
    pub fraction: f64,
    pub seed: u64,
    pub auc: Option<f64>,
    pub wall_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub method: Method,
    pub fraction: f64,
    pub runs: usize,
    pub mean_auc: Option<f64>,
    pub std_auc: Option<f64>,
    pub mean_wall_time_s: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalReport {
    /// Long-form `method,fraction,seed,auc,wall_time_s`; unrecorded values
    /// are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,fraction,seed,auc,wall_time_s\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.method,
                r.fraction,
                r.seed,
                fmt_opt(r.auc),
                fmt_opt(r.wall_time)
            ));
        }
        out
    }

    /// Mean and population standard deviation per (method, fraction), in
    /// method then fraction order.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut groups: BTreeMap<(Method, u64), Vec<&EvalRow>> = BTreeMap::new();
        for r in &self.rows {
            groups
                .entry((r.method, r.fraction.to_bits()))
                .or_default()
                .push(r);
        }
        groups
            .into_iter()
            .map(|((method, bits), rows)| {
                let aucs: Vec<f64> = rows.iter().filter_map(|r| r.auc).collect();
                let times: Vec<f64> = rows.iter().filter_map(|r| r.wall_time).collect();
                let (mean_auc, std_auc) = if aucs.is_empty() {
                    (None, None)
                } else {
                    let (m, s) = mean_std(&aucs);
                    (Some(m), Some(s))
                };
                Aggregate {
                    method,
                    fraction: f64::from_bits(bits),
                    runs: rows.len(),
                    mean_auc,
                    std_auc,
                    mean_wall_time_s: (!times.is_empty())
                        .then(|| times.iter().sum::<f64>() / times.len() as f64),
                }
            })
            .collect()
    }

    /// Mean AUC per method across all its rows.
    pub fn method_means(&self) -> BTreeMap<Method, f64> {
        let mut acc: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            if let Some(a) = r.auc {
                acc.entry(r.method).or_default().push(a);
            }
        }
        acc.into_iter()
            .map(|(m, v)| (m, v.iter().sum::<f64>() / v.len() as f64))
            .collect()
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary {
            method_mean_auc: BTreeMap<&'static str, f64>,
            groups: Vec<Aggregate>,
        }
        let summary = Summary {
            method_mean_auc: self
                .method_means()
                .into_iter()
                .map(|(m, v)| (m.id(), v))
                .collect(),
            groups: self.aggregates(),
        };
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"
    }
}

fn timed<T>(record: bool, f: impl FnOnce() -> T) -> (T, Option<f64>) {
    let start = Instant::now();
    let out = f();
    (out, record.then(|| start.elapsed().as_secs_f64()))
}

/// AUC of every method on the full data. With `record_time` the jobs run
/// one after another and wall-clock seconds are reported.
pub fn benchmark(
    x: &FeatureMatrix,
    labels: &[u8],
    methods: &[Method],
    config: &EvalConfig,
    record_time: bool,
) -> Result<EvalReport> {
    stability_experiment(
        x,
        labels,
        &[1.0],
        &[config.score.seed],
        methods,
        config,
        record_time,
    )
}

/// Draw the subsample for one (fraction, seed) cell, redrawing until both
/// classes are present.
pub fn stability_subsample(
    x: &FeatureMatrix,
    labels: &[u8],
    fraction: f64,
    seed: u64,
) -> Result<(FeatureMatrix, Vec<u8>)> {
    let two_class = |l: &[u8]| l.contains(&0) && l.contains(&1);
    if fraction == 1.0 {
        if !two_class(labels) {
            return Err(EvalError::OneClassOnly.into());
        }
        return Ok(subsample(x, labels, fraction, seed)?);
    }
    let cell_seed = derive_seed(seed, fraction.to_bits());
    for attempt in 0..SUBSAMPLE_ATTEMPTS {
        let (sx, sl) = subsample(x, labels, fraction, derive_seed(cell_seed, attempt))?;
        if two_class(&sl) {
            return Ok((sx, sl));
        }
    }
    Err(EvalError::DegenerateSubsample {
        fraction,
        seed,
        attempts: SUBSAMPLE_ATTEMPTS,
    }
    .into())
}

/// For every (fraction, seed) draw one two-class subsample, then score it
/// with every method and record the AUC. Rows come out in fraction, seed,
/// method order.
///
/// Cells run in parallel unless `record_time` is set; the AUCs do not depend
/// on it.
pub fn stability_experiment(
    x: &FeatureMatrix,
    labels: &[u8],
    fractions: &[f64],
    seeds: &[u64],
    methods: &[Method],
    config: &EvalConfig,
    record_time: bool,
) -> Result<EvalReport> {
    if labels.len() != x.n_rows() {
        return Err(EvalError::LengthMismatch {
            labels: labels.len(),
            scores: x.n_rows(),
        }
        .into());
    }
    let cells: Vec<(f64, u64)> = fractions
        .iter()
        .flat_map(|&f| seeds.iter().map(move |&s| (f, s)))
        .collect();

    let run_cell = |&(fraction, seed): &(f64, u64)| -> Result<Vec<EvalRow>> {
        let (sx, sl) = stability_subsample(x, labels, fraction, seed)?;
        methods
            .iter()
            .map(|&method| {
                let (scores, wall_time) =
                    timed(record_time, || method_scores(method, &sx, config, seed));
                Ok(EvalRow {
                    method,
                    fraction,
                    seed,
                    auc: Some(auc(&sl, &scores?)?),
                    wall_time,
                })
            })
            .collect()
    };

    let results: Vec<Result<Vec<EvalRow>>> = if record_time {
        cells.iter().map(run_cell).collect()
    } else {
        par::map_slice(&cells, run_cell)
    };
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(EvalReport { rows })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median wall-clock seconds of scoring `x` with each method over
/// `repeats` sequential runs. Data loading is not timed.
pub fn runtime_benchmark(
    x: &FeatureMatrix,
    methods: &[Method],
    repeats: usize,
    config: &EvalConfig,
) -> Result<EvalReport> {
    if repeats == 0 {
        return Err(EvalError::NoRepeats.into());
    }
    let seed = config.score.seed;
    let mut rows = Vec::new();
    for &method in methods {
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let (scores, t) = timed(true, || method_scores(method, x, config, seed));
            scores?;
            times.push(t.unwrap_or_default());
        }
        rows.push(EvalRow {
            method,
            fraction: 1.0,
            seed,
            auc: None,
            wall_time: Some(median(&mut times)),
        });
    }
    Ok(EvalReport { rows })
}
