//! KNN graph over a distance matrix, modularity-based community detection
//! and per-community medoids.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::Serialize;
use thiserror::Error;

use crate::forest::DistanceMatrix;
use crate::{par, rng_from};

/// Gains within this margin of the current best are treated as ties.
const GAIN_EPS: f64 = 1e-10;
const MAX_PASSES: usize = 1000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("k = {k} is too large for {n} points (max {max})", max = n.saturating_sub(1))]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid cluster labels: {0}")]
    InvalidLabels(String),
}

/// `max(1, ceil(ln n))`, capped at `n - 1`.
pub fn default_k(n: usize) -> usize {
    let k = (n.max(1) as f64).ln().ceil().max(1.0) as usize;
    k.min(n.saturating_sub(1)).max(1)
}

/// Undirected simple graph with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborGraph {
    adjacency: Vec<Vec<usize>>,
}

impl NeighborGraph {
    /// Build from an edge list; self-loops are dropped and duplicates merged.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Self { adjacency }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Edges as `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .collect()
    }

    /// Connected component id per node, numbered by lowest member.
    pub fn components(&self) -> Vec<usize> {
        let n = self.len();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = next;
            while let Some(v) = stack.pop() {
                for &w in &self.adjacency[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

/// The `k` nearest other points of `i`, ties broken by lower index.
pub fn nearest(d: &DistanceMatrix, i: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..d.len()).filter(|&j| j != i).collect();
    let row = d.row(i);
    others.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    others.truncate(k);
    others
}

/// Connect every point to its `k` nearest others; the union of those
/// relations is the undirected edge set.
pub fn knn_graph(d: &DistanceMatrix, k: usize) -> Result<NeighborGraph, GraphError> {
    let n = d.len();
    if k == 0 {
        return Err(GraphError::ZeroK);
    }
    if k + 1 > n {
        return Err(GraphError::KTooLarge { k, n });
    }
    let lists = par::map_range(n, |i| nearest(d, i, k));
    Ok(NeighborGraph::from_edges(
        n,
        lists
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.iter().map(move |&j| (i, j))),
    ))
}

/// Weighted graph used between aggregation levels. `self_loops[i]` holds
/// the weight of edges folded inside node `i`.
struct WeightedGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
}

impl WeightedGraph {
    fn from_graph(g: &NeighborGraph) -> Self {
        Self {
            adjacency: (0..g.len())
                .map(|i| g.neighbors(i).iter().map(|&j| (j, 1.0)).collect())
                .collect(),
            self_loops: vec![0.0; g.len()],
        }
    }

    fn len(&self) -> usize {
        self.adjacency.len()
    }

    fn degree(&self, i: usize) -> f64 {
        self.adjacency[i].iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * self.self_loops[i]
    }

    fn aggregate(&self, community: &[usize], k: usize) -> Self {
        let mut links: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        let mut self_loops = vec![0.0; k];
        for (i, list) in self.adjacency.iter().enumerate() {
            let ci = community[i];
            self_loops[ci] += self.self_loops[i];
            for &(j, w) in list {
                let cj = community[j];
                if ci == cj {
                    // Each internal edge is seen from both ends.
                    self_loops[ci] += w / 2.0;
                } else {
                    *links[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        Self {
            adjacency: links.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loops,
        }
    }
}

/// Local-move phase: returns a community per node of `g`, renumbered by first
/// appearance, and the community count.
fn local_moves(g: &WeightedGraph, m2: f64, rng: &mut crate::Rng) -> (Vec<usize>, usize) {
    let n = g.len();
    let degree: Vec<f64> = (0..n).map(|i| g.degree(i)).collect();
    let mut community: Vec<usize> = (0..n).collect();
    let mut total = degree.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut weights: BTreeMap<usize, f64> = BTreeMap::new();
    for _ in 0..MAX_PASSES {
        let mut moved = false;
        for &i in &order {
            let current = community[i];
            weights.clear();
            for &(j, w) in &g.adjacency[i] {
                *weights.entry(community[j]).or_insert(0.0) += w;
            }
            total[current] -= degree[i];
            let k_i = degree[i];
            let gain = |c: usize, w: f64| w - total[c] * k_i / m2;

            let mut best = current;
            let mut best_gain = gain(current, weights.get(&current).copied().unwrap_or(0.0));
            for (&c, &w) in &weights {
                let g_c = gain(c, w);
                if g_c > best_gain + GAIN_EPS {
                    best = c;
                    best_gain = g_c;
                }
            }
            total[best] += k_i;
            if best != current {
                community[i] = best;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    renumber(&community)
}

fn renumber(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let out = labels
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Greedy modularity maximisation over the unweighted graph: local moves to
/// the best neighbouring community, then aggregation, until no move improves
/// modularity. Node visit order at each level is shuffled from `seed`.
/// Labels are numbered in order of first appearance by node index.
pub fn detect_communities(g: &NeighborGraph, seed: u64) -> Vec<usize> {
    let n = g.len();
    let mut labels: Vec<usize> = (0..n).collect();
    let mut level = WeightedGraph::from_graph(g);
    let m2: f64 = (0..n).map(|i| g.degree(i) as f64).sum();
    if m2 == 0.0 {
        return labels;
    }
    let mut rng = rng_from(seed);
    loop {
        let (community, k) = local_moves(&level, m2, &mut rng);
        if k == level.len() {
            break;
        }
        for l in &mut labels {
            *l = community[*l];
        }
        level = level.aggregate(&community, k);
    }
    renumber(&labels).0
}

/// Newman modularity of a partition of the unweighted graph.
pub fn modularity(g: &NeighborGraph, labels: &[usize]) -> f64 {
    let m2: f64 = (0..g.len()).map(|i| g.degree(i) as f64).sum();
    if m2 == 0.0 {
        return 0.0;
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut inside = vec![0.0; k];
    let mut degree = vec![0.0; k];
    for i in 0..g.len() {
        degree[labels[i]] += g.degree(i) as f64;
        for &j in g.neighbors(i) {
            if labels[j] == labels[i] {
                inside[labels[i]] += 1.0;
            }
        }
    }
    inside
        .iter()
        .zip(&degree)
        .map(|(&l, &d)| l / m2 - (d / m2).powi(2))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cluster {
    /// Sorted ascending.
    pub members: Vec<usize>,
    pub center: usize,
    pub d_c: f64,
}

/// Partition of the points into clusters with a medoid and density cutoff each.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Clustering {
    labels: Vec<usize>,
    clusters: Vec<Cluster>,
}

impl Clustering {
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster_of(&self, i: usize) -> &Cluster {
        &self.clusters[self.labels[i]]
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn centers(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.center).collect()
    }

    pub(crate) fn set_d_c(&mut self, cluster: usize, d_c: f64) {
        self.clusters[cluster].d_c = d_c;
    }

    /// Diagnostic export: `node,cluster,is_center`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,cluster,is_center\n");
        for (i, &c) in self.labels.iter().enumerate() {
            let center = (self.clusters[c].center == i) as u8;
            out.push_str(&format!("{i},{c},{center}\n"));
        }
        out
    }
}

/// Medoid of `members` under `d`: smallest within-cluster row sum, ties to
/// the lowest index. `members` must be sorted.
pub fn medoid(members: &[usize], d: &DistanceMatrix) -> usize {
    let mut best = (members[0], f64::INFINITY);
    for &i in members {
        let sum: f64 = members.iter().map(|&j| d.get(i, j)).sum();
        if sum < best.1 {
            best = (i, sum);
        }
    }
    best.0
}

/// Group points by label and pick each cluster's medoid. Labels must be
/// `0..K` with every id used. `d_c` starts at 0.
pub fn cluster_centers(labels: &[usize], d: &DistanceMatrix) -> Result<Clustering, GraphError> {
    if labels.len() != d.len() {
        return Err(GraphError::InvalidLabels(format!(
            "{} labels for {} points",
            labels.len(),
            d.len()
        )));
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut members = vec![Vec::new(); k];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    if k == 0 || members.iter().any(Vec::is_empty) {
        return Err(GraphError::InvalidLabels(
            "cluster ids must be 0..K with no gaps".into(),
        ));
    }
    let centers = par::map_slice(&members, |m| medoid(m, d));
    Ok(Clustering {
        labels: labels.to_vec(),
        clusters: members
            .into_iter()
            .zip(centers)
            .map(|(members, center)| Cluster {
                members,
                center,
                d_c: 0.0,
            })
            .collect(),
    })
}
