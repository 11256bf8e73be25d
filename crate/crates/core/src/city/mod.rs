//! Cities: nodes, street graph, demand, and cached shortest paths.

mod augment;
mod generate;
mod io;
mod layout;
mod paths;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use augment::{augment, augment_with, Augmentation};
pub use generate::{generate_city, CityKind, AREA_SIDE_METERS, DEMAND_RANGE, VEHICLE_SPEED};
pub use io::{load_benchmark, load_benchmark_files, parse_matrix, Benchmark, CityFile};
pub use paths::{all_pairs_shortest_paths, ShortestPathTable};

/// Tolerance for demand / travel-time symmetry checks.
pub const SYMMETRY_TOLERANCE: f64 = 1e-6;

/// Route count and route length bounds (in stops).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NdpParams {
    #[serde(rename = "S")]
    pub routes: usize,
    #[serde(rename = "MIN")]
    pub min_len: usize,
    #[serde(rename = "MAX")]
    pub max_len: usize,
}

impl NdpParams {
    pub fn new(routes: usize, min_len: usize, max_len: usize) -> Self {
        NdpParams {
            routes,
            min_len,
            max_len,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.routes < 1 {
            return Err(Error::InvalidParams("S must be at least 1".into()));
        }
        if !(2 <= self.min_len && self.min_len <= self.max_len && self.max_len <= n) {
            return Err(Error::InvalidParams(format!(
                "need 2 <= MIN <= MAX <= n, got MIN={} MAX={} n={}",
                self.min_len, self.max_len, n
            )));
        }
        Ok(())
    }

    /// Same params with `MAX` (and `MIN` if needed) capped at `n`.
    pub fn clamped_to(&self, n: usize) -> Self {
        let max_len = self.max_len.min(n);
        NdpParams {
            routes: self.routes,
            min_len: self.min_len.min(max_len),
            max_len,
        }
    }
}

/// Undirected street edge with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreetEdge {
    pub i: usize,
    pub j: usize,
    pub time: f64,
}

/// Immutable city: positions (meters), street edges (seconds), symmetric demand.
#[derive(Debug, Clone)]
pub struct City {
    positions: Vec<[f64; 2]>,
    synthetic_positions: bool,
    edges: Vec<StreetEdge>,
    neighbors: Vec<Vec<(usize, f64)>>,
    street: Vec<f64>,
    demand: Vec<f64>,
    paths: ShortestPathTable,
}

impl City {
    /// Builds a city, validating the street graph and demand matrix.
    ///
    /// `edges` may list each undirected edge once in either orientation;
    /// duplicates with equal time are merged.
    pub fn new(
        positions: Vec<[f64; 2]>,
        edges: &[(usize, usize, f64)],
        demand: Vec<f64>,
        synthetic_positions: bool,
    ) -> Result<City> {
        let n = positions.len();
        if n < 2 {
            return Err(Error::InvalidParams("a city needs at least 2 nodes".into()));
        }
        if demand.len() != n * n {
            return Err(Error::InvalidMatrix(format!(
                "demand has {} entries, expected {}",
                demand.len(),
                n * n
            )));
        }
        for i in 0..n {
            if demand[i * n + i] != 0.0 {
                return Err(Error::InvalidMatrix(format!("demand diagonal at {i} is nonzero")));
            }
            for j in 0..n {
                let d = demand[i * n + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::InvalidMatrix(format!("demand[{i}][{j}] = {d}")));
                }
                if (d - demand[j * n + i]).abs() > SYMMETRY_TOLERANCE * d.abs().max(1.0) {
                    return Err(Error::InvalidMatrix(format!(
                        "demand is asymmetric at ({i}, {j})"
                    )));
                }
            }
        }

        let mut street = vec![f64::INFINITY; n * n];
        for i in 0..n {
            street[i * n + i] = 0.0;
        }
        let mut canon = Vec::new();
        for &(a, b, t) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::InvalidParams(format!("bad street edge ({a}, {b})")));
            }
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "street edge ({a}, {b}) has non-positive time {t}"
                )));
            }
            let (i, j) = (a.min(b), a.max(b));
            let existing = street[i * n + j];
            if existing.is_finite() {
                if (existing - t).abs() > SYMMETRY_TOLERANCE * t.max(1.0) {
                    return Err(Error::InvalidParams(format!(
                        "street edge ({i}, {j}) listed with different times"
                    )));
                }
                continue;
            }
            street[i * n + j] = t;
            street[j * n + i] = t;
            canon.push(StreetEdge { i, j, time: t });
        }
        canon.sort_by_key(|e| (e.i, e.j));

        let mut neighbors = vec![Vec::new(); n];
        for e in &canon {
            neighbors[e.i].push((e.j, e.time));
            neighbors[e.j].push((e.i, e.time));
        }
        for nb in &mut neighbors {
            nb.sort_by_key(|&(k, _)| k);
        }
        let paths = all_pairs_shortest_paths(&neighbors)?;
        Ok(City {
            positions,
            synthetic_positions,
            edges: canon,
            neighbors,
            street,
            demand,
            paths,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    /// True when positions were synthesized by layout rather than read from data.
    pub fn has_synthetic_positions(&self) -> bool {
        self.synthetic_positions
    }

    pub fn edges(&self) -> &[StreetEdge] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Street drive time, `None` when `i` and `j` are not adjacent.
    #[inline]
    pub fn street_time(&self, i: usize, j: usize) -> Option<f64> {
        let t = self.street[i * self.len() + j];
        (i != j && t.is_finite()).then_some(t)
    }

    #[inline]
    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.street_time(i, j).is_some()
    }

    #[inline]
    pub fn demand(&self, i: usize, j: usize) -> f64 {
        self.demand[i * self.len() + j]
    }

    pub fn demand_matrix(&self) -> &[f64] {
        &self.demand
    }

    pub fn paths(&self) -> &ShortestPathTable {
        &self.paths
    }

    /// Shortest drive time `T[i][j]`.
    #[inline]
    pub fn travel_time(&self, i: usize, j: usize) -> f64 {
        self.paths.time(i, j)
    }

    pub fn max_travel_time(&self) -> f64 {
        self.paths.max_time()
    }

    pub fn total_demand(&self) -> f64 {
        self.demand.iter().sum()
    }

    pub(crate) fn with_transform(
        &self,
        positions: Vec<[f64; 2]>,
        time_scale: f64,
        demand_scale: f64,
    ) -> City {
        let n = self.len();
        let mut street = self.street.clone();
        for i in 0..n {
            for j in 0..n {
                if i != j && street[i * n + j].is_finite() {
                    street[i * n + j] *= time_scale;
                }
            }
        }
        City {
            positions,
            synthetic_positions: self.synthetic_positions,
            edges: self
                .edges
                .iter()
                .map(|e| StreetEdge {
                    time: e.time * time_scale,
                    ..*e
                })
                .collect(),
            neighbors: self
                .neighbors
                .iter()
                .map(|nb| nb.iter().map(|&(k, w)| (k, w * time_scale)).collect())
                .collect(),
            street,
            demand: self.demand.iter().map(|d| d * demand_scale).collect(),
            paths: self.paths.scaled(time_scale),
        }
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<City> {
        let n = self.len();
        if perm.len() != n {
            return Err(Error::InvalidParams("permutation length mismatch".into()));
        }
        let mut positions = vec![[0.0; 2]; n];
        let mut demand = vec![0.0; n * n];
        for i in 0..n {
            positions[perm[i]] = self.positions[i];
            for j in 0..n {
                demand[perm[i] * n + perm[j]] = self.demand(i, j);
            }
        }
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| (perm[e.i], perm[e.j], e.time))
            .collect();
        City::new(positions, &edges, demand, self.synthetic_positions)
    }
}
