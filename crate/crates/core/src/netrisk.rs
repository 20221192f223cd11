//! Topology of the thresholded interbank graph: clustering, shortest paths,
//! hubs and the adopters' systemic core, plus pairwise coupling summaries.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsdm::coupling_correlation;
use crate::error::{invalid, Result};
use crate::numeric::median;
use crate::weights::WeightMatrix;

/// Undirected simple graph over entities with adoption and size attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct BankGraph {
    adjacency: Vec<Vec<bool>>,
    neighbours: Vec<Vec<usize>>,
    threshold: f64,
    adopters: Vec<bool>,
    sizes: Option<Vec<f64>>,
}

impl BankGraph {
    /// Validates symmetry and the empty diagonal.
    pub fn new(
        adjacency: Vec<Vec<bool>>,
        adopters: Vec<bool>,
        sizes: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = adjacency.len();
        if adjacency.iter().any(|r| r.len() != n) {
            return Err(invalid("adjacency must be square"));
        }
        if adopters.len() != n || sizes.as_ref().is_some_and(|s| s.len() != n) {
            return Err(invalid("one adoption flag and size per node required"));
        }
        for i in 0..n {
            if adjacency[i][i] {
                return Err(invalid(format!("self-loop at node {i}")));
            }
            for j in 0..i {
                if adjacency[i][j] != adjacency[j][i] {
                    return Err(invalid(format!("adjacency is not symmetric at ({i}, {j})")));
                }
            }
        }
        let neighbours = adjacency
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &e)| e)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();
        Ok(Self {
            adjacency,
            neighbours,
            threshold: f64::NAN,
            adopters,
            sizes,
        })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)], adopters: Vec<bool>) -> Result<Self> {
        let mut adj = vec![vec![false; n]; n];
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(invalid(format!("bad edge ({i}, {j}) for {n} nodes")));
            }
            adj[i][j] = true;
            adj[j][i] = true;
        }
        Self::new(adj, adopters, None)
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn adopters(&self) -> &[bool] {
        &self.adopters
    }

    pub fn sizes(&self) -> Option<&[f64]> {
        self.sizes.as_deref()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i][j]
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.neighbours[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbours[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbours.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn density(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (n * (n - 1) / 2) as f64
    }

    /// Same graph with node `perm[k]` of `self` placed at position `k`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        let adj = (0..n)
            .map(|a| (0..n).map(|b| self.adjacency[perm[a]][perm[b]]).collect())
            .collect();
        let mut g = Self::new(
            adj,
            perm.iter().map(|&i| self.adopters[i]).collect(),
            self.sizes
                .as_ref()
                .map(|s| perm.iter().map(|&i| s[i]).collect()),
        )
        .expect("permutation preserves validity");
        g.threshold = self.threshold;
        g
    }
}

/// Median of the strictly positive off-diagonal entries.
pub fn default_threshold(w: &WeightMatrix) -> Result<f64> {
    let m = w.matrix();
    let n = m.nrows();
    let positive: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| m[(i, j)]))
        .filter(|&v| v > 0.0)
        .collect();
    if positive.is_empty() {
        return Err(invalid("weight matrix has no positive entries"));
    }
    Ok(median(&positive))
}

/// Edge `i–j` iff `max(w_ij, w_ji) ≥ threshold`; `None` uses the median
/// positive entry. An empty result is logged, not rejected.
pub fn binarize(
    w: &WeightMatrix,
    threshold: Option<f64>,
    adopters: Vec<bool>,
    sizes: Option<Vec<f64>>,
) -> Result<BankGraph> {
    let thr = match threshold {
        Some(t) => t,
        None => default_threshold(w)?,
    };
    if !(thr > 0.0) {
        return Err(invalid(format!("threshold must be positive, got {thr}")));
    }
    let m = w.matrix();
    let n = m.nrows();
    let adj = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| i != j && m[(i, j)].max(m[(j, i)]) >= thr)
                .collect()
        })
        .collect();
    let mut g = BankGraph::new(adj, adopters, sizes)?;
    g.threshold = thr;
    if g.edge_count() == 0 {
        log::warn!("threshold {thr} leaves the graph without edges");
    }
    Ok(g)
}

fn group_mean(values: &[f64], keep: impl Fn(usize) -> bool) -> Option<f64> {
    let sel: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, &v)| v)
        .collect();
    (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub local: Vec<f64>,
    pub mean: f64,
    pub adopter_mean: Option<f64>,
    pub non_adopter_mean: Option<f64>,
}

/// Local clustering `2·triangles / (k(k − 1))`, zero below degree 2.
pub fn clustering_coefficients(g: &BankGraph) -> Clustering {
    let local: Vec<f64> = (0..g.n())
        .map(|i| {
            let nb = g.neighbours(i);
            let k = nb.len();
            if k < 2 {
                return 0.0;
            }
            let mut closed = 0usize;
            for (a, &u) in nb.iter().enumerate() {
                for &v in &nb[a + 1..] {
                    if g.has_edge(u, v) {
                        closed += 1;
                    }
                }
            }
            closed as f64 / (k * (k - 1) / 2) as f64
        })
        .collect();
    let ad = g.adopters();
    Clustering {
        mean: group_mean(&local, |_| true).unwrap_or(f64::NAN),
        adopter_mean: group_mean(&local, |i| ad[i]),
        non_adopter_mean: group_mean(&local, |i| !ad[i]),
        local,
    }
}

/// Hop distances from `source`; `None` for unreachable nodes.
pub fn bfs(g: &BankGraph, source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.n()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("queued nodes are reached");
        for &v in g.neighbours(u) {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// All-pairs hop distances, one BFS per source.
pub fn distance_matrix(g: &BankGraph) -> Vec<Vec<Option<usize>>> {
    (0..g.n()).into_par_iter().map(|s| bfs(g, s)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    /// Mean distance over connected pairs.
    pub mean: Option<f64>,
    pub connected_pairs: usize,
    pub disconnected_pairs: usize,
}

impl PairSummary {
    fn from_distances<'a>(d: impl Iterator<Item = &'a Option<usize>>) -> Self {
        let (mut sum, mut conn, mut disc) = (0usize, 0usize, 0usize);
        for x in d {
            match x {
                Some(v) => {
                    sum += v;
                    conn += 1;
                }
                None => disc += 1,
            }
        }
        Self {
            mean: (conn > 0).then(|| sum as f64 / conn as f64),
            connected_pairs: conn,
            disconnected_pairs: disc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub all: PairSummary,
    /// Pairs of adopters, with distances measured in the whole graph.
    pub adopters: PairSummary,
    pub non_adopters: PairSummary,
}

/// Average shortest-path length over unordered pairs; unreachable pairs are
/// counted but left out of the means.
pub fn path_lengths(g: &BankGraph) -> PathStats {
    let dist = distance_matrix(g);
    let ad = g.adopters();
    let pairs = |keep: &dyn Fn(usize, usize) -> bool| {
        let sel: Vec<&Option<usize>> = (0..g.n())
            .flat_map(|i| (i + 1..g.n()).map(move |j| (i, j)))
            .filter(|&(i, j)| keep(i, j))
            .map(|(i, j)| &dist[i][j])
            .collect();
        PairSummary::from_distances(sel.into_iter())
    };
    PathStats {
        all: pairs(&|_, _| true),
        adopters: pairs(&|i, j| ad[i] && ad[j]),
        non_adopters: pairs(&|i, j| !ad[i] && !ad[j]),
    }
}

/// Nodes in the top decile of degree: the `⌈N/10⌉` highest degrees with ties
/// at the cutoff included. Isolated nodes never qualify.
pub fn hubs(g: &BankGraph) -> Vec<usize> {
    let n = g.n();
    if n == 0 {
        return Vec::new();
    }
    let mut degrees: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
    degrees.sort_unstable_by(|a, b| b.cmp(a));
    let k = n.div_ceil(10);
    let cutoff = degrees[k - 1].max(1);
    (0..n).filter(|&i| g.degree(i) >= cutoff).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemicCore {
    /// Adopters and their direct neighbours, ascending.
    pub nodes: Vec<usize>,
    pub edges: usize,
    /// Edges with both endpoints adopters.
    pub adopter_edges: usize,
}

pub fn systemic_core(g: &BankGraph) -> SystemicCore {
    let ad = g.adopters();
    let mut member = ad.to_vec();
    for i in (0..g.n()).filter(|&i| ad[i]) {
        for &j in g.neighbours(i) {
            member[j] = true;
        }
    }
    let nodes: Vec<usize> = (0..g.n()).filter(|&i| member[i]).collect();
    let mut edges = 0;
    let mut adopter_edges = 0;
    for (a, &i) in nodes.iter().enumerate() {
        for &j in &nodes[a + 1..] {
            if g.has_edge(i, j) {
                edges += 1;
                if ad[i] && ad[j] {
                    adopter_edges += 1;
                }
            }
        }
    }
    SystemicCore {
        nodes,
        edges,
        adopter_edges,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    /// `max(w_ij, w_ji)`.
    pub weight: f64,
    pub both_adopters: bool,
}

/// Edges with `source < target`, in row-major order.
pub fn edge_list(g: &BankGraph, w: &WeightMatrix) -> Vec<Edge> {
    let m = w.matrix();
    let ad = g.adopters();
    let mut out = Vec::new();
    for i in 0..g.n() {
        for &j in g.neighbours(i) {
            if j > i {
                out.push(Edge {
                    source: i,
                    target: j,
                    weight: m[(i, j)].max(m[(j, i)]),
                    both_adopters: ad[i] && ad[j],
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub density: f64,
    pub threshold: f64,
    pub adopters: usize,
    pub clustering: Clustering,
    pub paths: PathStats,
    pub hubs: Vec<usize>,
    pub hub_adopters: usize,
    pub core: SystemicCore,
    pub warnings: Vec<String>,
}

pub fn graph_stats(g: &BankGraph) -> GraphStats {
    let hubs = hubs(g);
    let mut warnings = Vec::new();
    if g.edge_count() == 0 {
        warnings.push(format!(
            "threshold {} leaves the graph without edges",
            g.threshold()
        ));
    }
    if !g.adopters().iter().any(|&a| a) {
        warnings.push("no adopters: group statistics are undefined".into());
    }
    GraphStats {
        nodes: g.n(),
        edges: g.edge_count(),
        density: g.density(),
        threshold: g.threshold(),
        adopters: g.adopters().iter().filter(|&&a| a).count(),
        clustering: clustering_coefficients(g),
        paths: path_lengths(g),
        hub_adopters: hubs.iter().filter(|&&i| g.adopters()[i]).count(),
        hubs,
        core: systemic_core(g),
        warnings,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSummary {
    /// Mean over unordered pairs of adopters.
    pub adopter_pairs: Option<f64>,
    pub mixed_pairs: Option<f64>,
    pub non_adopter_pairs: Option<f64>,
    /// Pairs whose raw value left [−1, 1].
    pub clamped: usize,
}

/// Pairwise coupled correlations `base_ij + δ·D_i·D_j·overlap_ij` (clamped)
/// and their means by adoption status of the pair.
pub fn coupling_matrix(
    base: &DMatrix<f64>,
    delta: f64,
    adopted: &[bool],
    overlap: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, CouplingSummary)> {
    let n = adopted.len();
    if base.shape() != (n, n) || overlap.shape() != (n, n) {
        return Err(invalid(
            "base and overlap must be N×N with N adoption flags",
        ));
    }
    if base.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(invalid("baseline correlations must lie in [-1, 1]"));
    }
    if overlap.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid("vendor overlap must lie in [0, 1]"));
    }
    let mut out = DMatrix::identity(n, n);
    let mut groups = [(0.0, 0usize); 3];
    let mut clamped = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = if adopted[i] && adopted[j] { delta } else { 0.0 };
            let raw = base[(i, j)] + d * overlap[(i, j)];
            if raw.abs() > 1.0 {
                clamped += 1;
            }
            let c =
                coupling_correlation(base[(i, j)], delta, adopted[i], adopted[j], overlap[(i, j)]);
            out[(i, j)] = c;
            out[(j, i)] = c;
            let g = usize::from(adopted[i]) + usize::from(adopted[j]);
            groups[2 - g].0 += c;
            groups[2 - g].1 += 1;
        }
    }
    let m = |k: usize| (groups[k].1 > 0).then(|| groups[k].0 / groups[k].1 as f64);
    Ok((
        out,
        CouplingSummary {
            adopter_pairs: m(0),
            mixed_pairs: m(1),
            non_adopter_pairs: m(2),
            clamped,
        },
    ))
}
