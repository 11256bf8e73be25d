//! All-pairs shortest street paths with deterministic path reconstruction.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Relative tolerance used when deciding whether an edge lies on a shortest path.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathTable {
    n: usize,
    times: Vec<f64>,
    next: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq)]
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

fn dijkstra(neighbors: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let n = neighbors.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(next, w) in &neighbors[node] {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(HeapEntry {
                    dist: nd,
                    node: next,
                });
            }
        }
    }
    dist
}

/// Computes exact shortest drive times between all node pairs.
///
/// `neighbors[i]` lists `(j, tau_ij)` sorted by `j`. Successors are chosen as
/// the lowest-index neighbour lying on some shortest path, which fixes one
/// canonical path per ordered pair.
pub fn all_pairs_shortest_paths(neighbors: &[Vec<(usize, f64)>]) -> Result<ShortestPathTable> {
    let n = neighbors.len();
    let mut times = vec![0.0; n * n];
    for i in 0..n {
        let dist = dijkstra(neighbors, i);
        // keep the upper triangle from the lower-index source so T is exactly symmetric
        for j in i..n {
            if !dist[j].is_finite() {
                return Err(Error::Disconnected { from: i, to: j });
            }
            times[i * n + j] = dist[j];
            times[j * n + i] = dist[j];
        }
    }

    let mut next = vec![usize::MAX; n * n];
    for i in 0..n {
        next[i * n + i] = i;
        for j in 0..n {
            if i == j {
                continue;
            }
            let target = times[i * n + j];
            let tol = TIE_TOLERANCE * target.max(1.0);
            let succ = neighbors[i]
                .iter()
                .find(|&&(k, w)| (w + times[k * n + j] - target).abs() <= tol)
                .map(|&(k, _)| k)
                .ok_or(Error::Disconnected { from: i, to: j })?;
            next[i * n + j] = succ;
        }
    }
    Ok(ShortestPathTable { n, times, next })
}

impl ShortestPathTable {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn time(&self, i: usize, j: usize) -> f64 {
        self.times[i * self.n + j]
    }

    #[inline]
    pub fn successor(&self, i: usize, j: usize) -> usize {
        self.next[i * self.n + j]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn max_time(&self) -> f64 {
        self.times.iter().copied().fold(0.0, f64::max)
    }

    /// Node sequence from `i` to `j` following the successor table.
    pub fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let mut path = vec![i];
        let mut cur = i;
        while cur != j {
            cur = self.successor(cur, j);
            path.push(cur);
            assert!(path.len() <= self.n, "cycle in successor table");
        }
        path
    }

    /// The canonical path for the unordered pair `{i, j}`, oriented from `i` to `j`.
    ///
    /// Both orientations of a pair visit the same nodes.
    pub fn canonical_path(&self, i: usize, j: usize) -> Vec<usize> {
        if i <= j {
            self.path(i, j)
        } else {
            let mut p = self.path(j, i);
            p.reverse();
            p
        }
    }

    pub(crate) fn scaled(&self, factor: f64) -> Self {
        ShortestPathTable {
            n: self.n,
            times: self.times.iter().map(|t| t * factor).collect(),
            next: self.next.clone(),
        }
    }
}
