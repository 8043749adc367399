//! Greedy spanner construction and the metric induced by a spanner.
//!
//! A spanner is a subgraph of the complete graph on a [`LocationSet`] whose
//! edge weights equal the underlying metric. Shortest paths in it never
//! undercut the metric and, for a δ-spanner, never exceed δ times it.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{LocationSet, Metric};

/// Relative slack used when deciding whether the current graph already
/// provides a path within the requested dilation. Absorbs rounding in
/// sums of edge weights, so exactly collinear shortcuts are recognised.
pub const SHORTCUT_RTOL: f64 = 1e-12;

/// Slack for dilation and lower-bound checks.
pub const DILATION_TOL: f64 = 1e-9;

/// Below this size, all-pairs shortest paths may use Floyd–Warshall.
pub const FLOYD_WARSHALL_MAX: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintCount {
    pub inequalities: usize,
    pub equalities: usize,
    pub variables: usize,
}

#[derive(Debug, Clone)]
pub struct Spanner {
    locations: LocationSet,
    edges: Vec<Edge>,
    delta_requested: f64,
    adjacency: Vec<Vec<(usize, f64)>>,
    apsp: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpannerFile {
    pub delta: f64,
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then node index
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from `src`. Stops once `target` is settled or the frontier
/// exceeds `cutoff`; unreached nodes stay at infinity.
fn dijkstra(
    adjacency: &[Vec<(usize, f64)>],
    src: usize,
    target: Option<usize>,
    cutoff: f64,
    dist: &mut Vec<f64>,
) {
    dist.clear();
    dist.resize(adjacency.len(), f64::INFINITY);
    dist[src] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry { dist: 0.0, node: src });
    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        if Some(node) == target || d > cutoff {
            return;
        }
        for &(next, w) in &adjacency[node] {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(HeapEntry { dist: nd, node: next });
            }
        }
    }
}

fn apsp_dijkstra(adjacency: &[Vec<(usize, f64)>]) -> Vec<f64> {
    let n = adjacency.len();
    let mut out = vec![f64::INFINITY; n * n];
    let mut dist = Vec::with_capacity(n);
    for src in 0..n {
        dijkstra(adjacency, src, None, f64::INFINITY, &mut dist);
        out[src * n..(src + 1) * n].copy_from_slice(&dist);
    }
    // Symmetrise: both directions should agree, but floating sums along
    // different relaxation orders may differ in the last bit.
    for i in 0..n {
        for j in (i + 1)..n {
            let d = out[i * n + j].min(out[j * n + i]);
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}

/// Floyd–Warshall over an edge list; the cross-check for small graphs.
pub fn apsp_floyd_warshall(n: usize, edges: &[Edge]) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; n * n];
    for i in 0..n {
        d[i * n + i] = 0.0;
    }
    for e in edges {
        let w = e.weight.min(d[e.a * n + e.b]);
        d[e.a * n + e.b] = w;
        d[e.b * n + e.a] = w;
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if dik.is_infinite() {
                continue;
            }
            for j in 0..n {
                let cand = dik + d[k * n + j];
                if cand < d[i * n + j] {
                    d[i * n + j] = cand;
                }
            }
        }
    }
    d
}

fn adjacency_of(n: usize, edges: &[Edge]) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.a].push((e.b, e.weight));
        adj[e.b].push((e.a, e.weight));
    }
    adj
}

/// Greedy δ-spanner: scan all unordered pairs in increasing metric distance
/// (ties broken by index pair) and add a pair as an edge whenever the graph
/// built so far has no path within `delta` times its distance.
pub fn get_spanner(locs: &LocationSet, metric: &Metric, delta: f64) -> Result<Spanner> {
    if !(delta.is_finite() && delta >= 1.0) {
        return Err(Error::input(format!("dilation must be at least 1, got {delta}")));
    }
    let n = locs.len();
    metric.require_len(n)?;

    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    pairs.sort_by(|&(a, b), &(c, d)| {
        metric
            .base(a, b)
            .total_cmp(&metric.base(c, d))
            .then((a, b).cmp(&(c, d)))
    });

    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut edges = Vec::new();
    let mut dist = Vec::with_capacity(n);
    for (a, b) in pairs {
        let w = metric.base(a, b);
        let bound = delta * w * (1.0 + SHORTCUT_RTOL);
        dijkstra(&adjacency, a, Some(b), bound, &mut dist);
        if dist[b] > bound {
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
            edges.push(Edge { a, b, weight: w });
        }
    }

    let apsp = apsp_dijkstra(&adjacency);
    let spanner = Spanner {
        locations: locs.clone(),
        edges,
        delta_requested: delta,
        adjacency,
        apsp,
    };
    spanner.check_invariants(metric)?;
    Ok(spanner)
}

/// Shortest-path weights of the spanner graph (infinite where disconnected).
pub fn all_pairs_shortest_paths(s: &Spanner) -> Vec<Vec<f64>> {
    let n = s.len();
    s.apsp.chunks(n).map(|r| r.to_vec()).collect()
}

/// Largest ratio of graph distance to metric distance over distinct pairs.
pub fn measured_dilation(s: &Spanner, metric: &Metric) -> Result<f64> {
    let n = s.len();
    metric.require_len(n)?;
    let mut worst: f64 = 1.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let g = s.apsp[i * n + j];
            if g.is_infinite() {
                return Err(Error::Structural(format!(
                    "spanner is disconnected: no path between {i} and {j}"
                )));
            }
            worst = worst.max(g / metric.base(i, j));
        }
    }
    Ok(worst)
}

/// Size of the spanner-reduced LP: each undirected edge yields one
/// constraint per reported location in each orientation.
pub fn constraint_count(s: &Spanner) -> ConstraintCount {
    let n = s.len();
    ConstraintCount {
        inequalities: 2 * s.edges.len() * n,
        equalities: n,
        variables: n * n,
    }
}

impl Spanner {
    /// Builds a spanner from an explicit edge list. Every edge weight must
    /// equal the metric distance between its endpoints.
    pub fn from_edges(
        locs: &LocationSet,
        metric: &Metric,
        delta: f64,
        edges: Vec<Edge>,
    ) -> Result<Spanner> {
        let n = locs.len();
        metric.require_len(n)?;
        for e in &edges {
            if e.a >= n || e.b >= n {
                return Err(Error::Index {
                    index: e.a.max(e.b),
                    len: n,
                });
            }
            if e.a == e.b {
                return Err(Error::input(format!("self-loop at {}", e.a)));
            }
            if e.weight != metric.base(e.a, e.b) {
                return Err(Error::input(format!(
                    "edge ({}, {}) has weight {} but the metric distance is {}",
                    e.a,
                    e.b,
                    e.weight,
                    metric.base(e.a, e.b)
                )));
            }
        }
        let adjacency = adjacency_of(n, &edges);
        let apsp = apsp_dijkstra(&adjacency);
        Ok(Spanner {
            locations: locs.clone(),
            edges,
            delta_requested: delta,
            adjacency,
            apsp,
        })
    }

    /// Checks connectivity, the lower bound `d_G >= dX` and the requested
    /// dilation bound.
    pub fn check_invariants(&self, metric: &Metric) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let g = self.apsp[i * n + j];
                let d = metric.base(i, j);
                if g.is_infinite() {
                    return Err(Error::Structural(format!("no path between {i} and {j}")));
                }
                if g < d - DILATION_TOL {
                    return Err(Error::Structural(format!(
                        "graph distance {g} undercuts metric distance {d} for ({i},{j})"
                    )));
                }
                if g > self.delta_requested * d + DILATION_TOL {
                    return Err(Error::Structural(format!(
                        "pair ({i},{j}) stretched by {} > {}",
                        g / d,
                        self.delta_requested
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &LocationSet {
        &self.locations
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn delta_requested(&self) -> f64 {
        self.delta_requested
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Shortest-path weight between `i` and `j`.
    pub fn path_distance(&self, i: usize, j: usize) -> f64 {
        self.apsp[i * self.len() + j]
    }

    pub fn is_connected(&self) -> bool {
        self.apsp.iter().all(|d| d.is_finite())
    }

    /// The graph-induced metric `d_G`.
    pub fn induced_metric(&self) -> Result<Metric> {
        Metric::graph_induced(self.len(), self.apsp.clone())
    }

    pub fn to_file(&self) -> SpannerFile {
        SpannerFile {
            delta: self.delta_requested,
            edges: self.edges.iter().map(|e| (e.a, e.b, e.weight)).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(locs: &LocationSet, metric: &Metric, s: &str) -> Result<Spanner> {
        let file: SpannerFile = serde_json::from_str(s)?;
        let edges = file
            .edges
            .into_iter()
            .map(|(a, b, weight)| Edge { a, b, weight })
            .collect();
        Spanner::from_edges(locs, metric, file.delta, edges)
    }

    pub fn load(locs: &LocationSet, metric: &Metric, path: impl AsRef<Path>) -> Result<Spanner> {
        Self::from_json(locs, metric, &std::fs::read_to_string(path)?)
    }
}
