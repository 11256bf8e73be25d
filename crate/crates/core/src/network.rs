//! Route networks and the five structural constraints.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::city::{City, NdpParams};
use crate::error::{Error, Result};

pub type Route = Vec<usize>;

/// Ordered set of routes. Serialized as a JSON list of node-index lists.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Network {
    pub routes: Vec<Route>,
}

impl Network {
    pub fn new(routes: Vec<Route>) -> Self {
        Network { routes }
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn is_partial(&self, params: &NdpParams) -> bool {
        self.routes.len() < params.routes
    }

    /// One-direction drive time along a route.
    pub fn route_time(city: &City, route: &[usize]) -> Result<f64> {
        route.windows(2).try_fold(0.0, |acc, w| {
            city.street_time(w[0], w[1])
                .map(|t| acc + t)
                .ok_or_else(|| {
                    Error::InvalidNetwork(format!("no street edge between {} and {}", w[0], w[1]))
                })
        })
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Network {
        Network::new(
            self.routes
                .iter()
                .map(|r| r.iter().map(|&v| perm[v]).collect())
                .collect(),
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("network serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// True when `route` is a simple path in the street graph (constraints 4 and 5).
pub fn is_simple_street_path(city: &City, route: &[usize]) -> bool {
    let mut seen = HashSet::with_capacity(route.len());
    route.iter().all(|&v| v < city.len() && seen.insert(v))
        && route.windows(2).all(|w| city.is_adjacent(w[0], w[1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthViolation {
    pub route: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedStop {
    pub route: usize,
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedLink {
    pub route: usize,
    pub from: usize,
    pub to: usize,
}

/// Per-constraint outcome for a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// Constraint 1: all nodes mutually reachable by transit.
    pub all_connected: bool,
    pub unconnected_pairs: usize,
    /// Constraint 2: exactly `S` routes.
    pub route_count_ok: bool,
    pub route_count: usize,
    pub expected_routes: usize,
    /// Constraint 3: `MIN <= |r| <= MAX`.
    pub length_violations: Vec<LengthViolation>,
    /// Constraint 4: no stop repeated within a route.
    pub repeated_stops: Vec<RepeatedStop>,
    /// Constraint 5: consecutive stops share a street edge.
    pub skipped_links: Vec<SkippedLink>,
}

impl ConstraintReport {
    pub fn all_pass(&self) -> bool {
        self.all_connected
            && self.route_count_ok
            && self.length_violations.is_empty()
            && self.repeated_stops.is_empty()
            && self.skipped_links.is_empty()
    }
}

/// Checks all five constraints. Connectivity ignores transfer penalties, so
/// it is evaluated on the route-sharing graph and works even when some links
/// are invalid.
pub fn check_constraints(city: &City, network: &Network, params: &NdpParams) -> ConstraintReport {
    let n = city.len();
    let mut length_violations = Vec::new();
    let mut repeated_stops = Vec::new();
    let mut skipped_links = Vec::new();
    for (ri, r) in network.routes.iter().enumerate() {
        if r.len() < params.min_len || r.len() > params.max_len {
            length_violations.push(LengthViolation {
                route: ri,
                len: r.len(),
            });
        }
        let mut seen = HashSet::new();
        for &v in r {
            if !seen.insert(v) {
                repeated_stops.push(RepeatedStop { route: ri, node: v });
            }
        }
        for w in r.windows(2) {
            if w[0] >= n || w[1] >= n || !city.is_adjacent(w[0], w[1]) {
                skipped_links.push(SkippedLink {
                    route: ri,
                    from: w[0],
                    to: w[1],
                });
            }
        }
    }

    // union-find over nodes joined by sharing a route
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut on_route = vec![false; n];
    for r in &network.routes {
        let valid: Vec<usize> = r.iter().copied().filter(|&v| v < n).collect();
        for &v in &valid {
            on_route[v] = true;
        }
        for w in valid.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let mut unconnected_pairs = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let ok = on_route[i] && on_route[j] && find(&mut parent, i) == find(&mut parent, j);
            if !ok {
                unconnected_pairs += 1;
            }
        }
    }

    ConstraintReport {
        all_connected: unconnected_pairs == 0,
        unconnected_pairs,
        route_count_ok: network.len() == params.routes,
        route_count: network.len(),
        expected_routes: params.routes,
        length_violations,
        repeated_stops,
        skipped_links,
    }
}
