use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::policy::CombinatorialOracle;
use crate::{Error, Result};

/// Smallest Dijkstra weight derived from a score.
pub const MIN_EDGE_WEIGHT: f64 = 1e-6;

/// Directed multigraph; edge ids are positions in `edges`.
#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
    out: Vec<Vec<usize>>,
}

impl Digraph {
    pub fn new(vertices: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut out = vec![Vec::new(); vertices];
        for (id, &(from, _)) in edges.iter().enumerate() {
            out[from].push(id);
        }
        Self {
            vertices,
            edges,
            out,
        }
    }

    pub fn outgoing(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    /// True when `path` is a walk of existing edges from `origin` to `dest`.
    pub fn is_path(&self, path: &[usize], origin: usize, dest: usize) -> bool {
        let mut at = origin;
        for &e in path {
            match self.edges.get(e) {
                Some(&(from, to)) if from == at => at = to,
                _ => return false,
            }
        }
        at == dest && (origin != dest || path.is_empty())
    }
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    vertex: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-weight path from `origin` to `dest` by Dijkstra's algorithm.
/// Edges of weight `+inf` are impassable. Among equal-cost routes into a
/// vertex the one arriving over the smaller edge id wins.
pub fn shortest_path(graph: &Digraph, weights: &[f64], origin: usize, dest: usize) -> Result<Vec<usize>> {
    if weights.len() != graph.edges.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} edges",
            weights.len(),
            graph.edges.len()
        )));
    }
    if origin >= graph.vertices || dest >= graph.vertices {
        return Err(Error::InvalidArgument(format!("vertex outside 0..{}", graph.vertices)));
    }
    for (edge, &w) in weights.iter().enumerate() {
        if w.is_nan() || w < 0.0 {
            return Err(Error::NegativeWeight { edge, weight: w });
        }
    }
    let mut dist = vec![f64::INFINITY; graph.vertices];
    let mut via = vec![usize::MAX; graph.vertices];
    let mut done = vec![false; graph.vertices];
    let mut heap = BinaryHeap::new();
    dist[origin] = 0.0;
    heap.push(Entry {
        dist: 0.0,
        vertex: origin,
    });
    while let Some(Entry { dist: d, vertex: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == dest {
            break;
        }
        for &e in graph.outgoing(u) {
            let w = weights[e];
            if w == f64::INFINITY {
                continue;
            }
            let v = graph.edges[e].1;
            if done[v] {
                continue;
            }
            let nd = d + w;
            if nd < dist[v] || (nd == dist[v] && e < via[v]) {
                dist[v] = nd;
                via[v] = e;
                heap.push(Entry { dist: nd, vertex: v });
            }
        }
    }
    if !dist[dest].is_finite() {
        return Err(Error::Unreachable { origin, dest });
    }
    let mut path = Vec::new();
    let mut at = dest;
    while at != origin {
        let e = via[at];
        path.push(e);
        at = graph.edges[e].0;
    }
    path.reverse();
    Ok(path)
}

/// Total weight of a path, summed from the origin.
pub fn path_cost(weights: &[f64], path: &[usize]) -> f64 {
    path.iter().fold(0.0, |acc, &e| acc + weights[e])
}

/// Every simple path (no repeated vertex) from `origin` to `dest`.
pub fn simple_paths(graph: &Digraph, origin: usize, dest: usize) -> Vec<Vec<usize>> {
    fn walk(
        g: &Digraph,
        at: usize,
        dest: usize,
        seen: &mut Vec<bool>,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if at == dest {
            out.push(path.clone());
            return;
        }
        for &e in g.outgoing(at) {
            let v = g.edges[e].1;
            if seen[v] {
                continue;
            }
            seen[v] = true;
            path.push(e);
            walk(g, v, dest, seen, path, out);
            path.pop();
            seen[v] = false;
        }
    }
    let mut out = Vec::new();
    let mut seen = vec![false; graph.vertices];
    seen[origin] = true;
    walk(graph, origin, dest, &mut seen, &mut Vec::new(), &mut out);
    out
}

/// Score-to-weight transform for cost minimisation: `max(ε, −score)`.
/// Scores model negative travel time, so a path of high total score is a
/// path of low total weight.
pub fn score_weights(scores: &[f64]) -> Vec<f64> {
    scores
        .iter()
        .map(|&s| if s.is_nan() { f64::INFINITY } else { (-s).max(MIN_EDGE_WEIGHT) })
        .collect()
}

/// Origin–destination routing as a super-arm oracle.
#[derive(Debug, Clone)]
pub struct PathOracle {
    pub graph: Digraph,
    pub origin: usize,
    pub dest: usize,
}

impl CombinatorialOracle for PathOracle {
    fn best_super_arm(&self, scores: &[f64]) -> Result<Vec<usize>> {
        shortest_path(&self.graph, &score_weights(scores), self.origin, self.dest)
    }
}
