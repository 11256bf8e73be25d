//! Transit trip assignment and the three-term network cost.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::city::{City, NdpParams};
use crate::error::{Error, Result};
use crate::network::Network;

/// Default transfer penalty: five minutes.
pub const DEFAULT_TRANSFER_PENALTY: f64 = 300.0;
pub const DEFAULT_BETA: f64 = 5.0;

/// Shortest transit trips between all node pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitAssignment {
    n: usize,
    times: Vec<f64>,
    transfers: Vec<u32>,
}

impl TransitAssignment {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Trip time in seconds including transfer penalties; infinite when unconnected.
    #[inline]
    pub fn time(&self, i: usize, j: usize) -> f64 {
        self.times[i * self.n + j]
    }

    /// Transfers on the fastest trip (fewest among equally fast trips).
    #[inline]
    pub fn transfers(&self, i: usize, j: usize) -> u32 {
        self.transfers[i * self.n + j]
    }

    #[inline]
    pub fn connected(&self, i: usize, j: usize) -> bool {
        self.times[i * self.n + j].is_finite()
    }

    pub fn unconnected_pairs(&self) -> usize {
        let n = self.n;
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !self.connected(i, j))
            .count()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Label {
    time: f64,
    transfers: u32,
    vertex: usize,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.transfers.cmp(&self.transfers))
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Expanded route graph: one vertex per (route, stop) incidence.
struct RouteGraph {
    /// node id of each incidence
    stop: Vec<usize>,
    /// riding arcs (to, time) per incidence, CSR layout
    ride_start: Vec<usize>,
    rides: Vec<(usize, f64)>,
    /// incidences at each city node
    at_node: Vec<Vec<usize>>,
    /// route of each incidence
    route: Vec<usize>,
}

impl RouteGraph {
    fn build(city: &City, network: &Network) -> Result<Self> {
        let n = city.len();
        let mut stop = Vec::new();
        let mut route = Vec::new();
        let mut at_node = vec![Vec::new(); n];
        let mut ride_start = vec![0];
        let mut rides = Vec::new();
        for (ri, r) in network.routes.iter().enumerate() {
            let base = stop.len();
            for (k, &v) in r.iter().enumerate() {
                if v >= n {
                    return Err(Error::InvalidNetwork(format!("route {ri} visits unknown node {v}")));
                }
                stop.push(v);
                route.push(ri);
                at_node[v].push(base + k);
                if k > 0 {
                    let t = city.street_time(r[k - 1], v).ok_or_else(|| {
                        Error::InvalidNetwork(format!(
                            "route {ri}: no street edge between {} and {v}",
                            r[k - 1]
                        ))
                    })?;
                    rides.push((base + k - 1, t));
                }
                if k + 1 < r.len() {
                    let t = city.street_time(v, r[k + 1]).ok_or_else(|| {
                        Error::InvalidNetwork(format!(
                            "route {ri}: no street edge between {v} and {}",
                            r[k + 1]
                        ))
                    })?;
                    rides.push((base + k + 1, t));
                }
                ride_start.push(rides.len());
            }
        }
        Ok(RouteGraph {
            stop,
            ride_start,
            rides,
            at_node,
            route,
        })
    }
}

/// Computes shortest transit trips for every origin.
///
/// Searches the expanded graph: boarding at the origin is free, riding costs
/// the street time between consecutive stops, switching to a different route
/// at a shared stop costs `transfer_penalty`, and alighting is free.
pub fn assign_transit_times(
    city: &City,
    network: &Network,
    transfer_penalty: f64,
) -> Result<TransitAssignment> {
    let n = city.len();
    let g = RouteGraph::build(city, network)?;
    let nv = g.stop.len();
    let mut times = vec![f64::INFINITY; n * n];
    let mut transfers = vec![u32::MAX; n * n];
    let mut dist = vec![f64::INFINITY; nv];
    let mut xfers = vec![u32::MAX; nv];
    let mut heap = BinaryHeap::new();

    for origin in 0..n {
        times[origin * n + origin] = 0.0;
        transfers[origin * n + origin] = 0;
        if g.at_node[origin].is_empty() {
            continue;
        }
        dist.fill(f64::INFINITY);
        xfers.fill(u32::MAX);
        for &v in &g.at_node[origin] {
            dist[v] = 0.0;
            xfers[v] = 0;
            heap.push(Label {
                time: 0.0,
                transfers: 0,
                vertex: v,
            });
        }
        while let Some(Label {
            time,
            transfers: tr,
            vertex,
        }) = heap.pop()
        {
            if (time, tr) > (dist[vertex], xfers[vertex]) {
                continue;
            }
            let mut relax = |to: usize, t: f64, x: u32, heap: &mut BinaryHeap<Label>| {
                if (t, x) < (dist[to], xfers[to]) {
                    dist[to] = t;
                    xfers[to] = x;
                    heap.push(Label {
                        time: t,
                        transfers: x,
                        vertex: to,
                    });
                }
            };
            for &(to, w) in &g.rides[g.ride_start[vertex]..g.ride_start[vertex + 1]] {
                relax(to, time + w, tr, &mut heap);
            }
            let here = g.stop[vertex];
            for &to in &g.at_node[here] {
                if g.route[to] != g.route[vertex] {
                    relax(to, time + transfer_penalty, tr + 1, &mut heap);
                }
            }
        }
        // alighting: best incidence at each destination
        for dest in 0..n {
            if dest == origin {
                continue;
            }
            let best = g.at_node[dest]
                .iter()
                .map(|&v| (dist[v], xfers[v]))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((t, x)) = best {
                if t.is_finite() {
                    times[origin * n + dest] = t;
                    transfers[origin * n + dest] = x;
                }
            }
        }
    }
    // float sums along reversed itineraries can differ in the last bit
    for i in 0..n {
        for j in (i + 1)..n {
            times[j * n + i] = times[i * n + j];
            transfers[j * n + i] = transfers[i * n + j];
        }
    }
    Ok(TransitAssignment {
        n,
        times,
        transfers,
    })
}

/// Demand-weighted mean transit trip time (seconds) over connected pairs.
pub fn passenger_cost(city: &City, assignment: &TransitAssignment) -> Result<f64> {
    let n = city.len();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i != j && assignment.connected(i, j) {
                let d = city.demand(i, j);
                num += d * assignment.time(i, j);
                den += d;
            }
        }
    }
    if den <= 0.0 {
        return Err(Error::DegenerateNetwork);
    }
    Ok(num / den)
}

/// Total drive time to traverse every route in both directions (seconds).
pub fn operator_cost(network: &Network, city: &City) -> Result<f64> {
    network
        .routes
        .iter()
        .try_fold(0.0, |acc, r| Ok(acc + 2.0 * Network::route_time(city, r)?))
}

/// Unconnected-pair fraction, plus per-stop length violations averaged over
/// `S`, plus one per missing route.
pub fn constraint_cost(
    city: &City,
    network: &Network,
    assignment: &TransitAssignment,
    params: &NdpParams,
) -> f64 {
    let n = city.len();
    let pairs = (n * (n - 1) / 2) as f64;
    let unconnected = assignment.unconnected_pairs() as f64 / pairs;
    let violation: usize = network
        .routes
        .iter()
        .map(|r| r.len().saturating_sub(params.max_len) + params.min_len.saturating_sub(r.len()))
        .sum();
    let missing = params.routes.saturating_sub(network.len());
    unconnected + violation as f64 / params.routes as f64 + missing as f64
}

/// Cost weights for one (city, S) combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub alpha: f64,
    pub beta: f64,
    pub transfer_penalty: f64,
    pub passenger_scale: f64,
    pub operator_scale: f64,
}

impl CostWeights {
    /// Derives the rescaling constants from the city's largest drive time.
    /// `alpha` is clamped to `[0, 1]`.
    pub fn new(city: &City, params: &NdpParams, alpha: f64, beta: f64, transfer_penalty: f64) -> Self {
        let max_t = city.max_travel_time();
        CostWeights {
            alpha: alpha.clamp(0.0, 1.0),
            beta,
            transfer_penalty,
            passenger_scale: 1.0 / max_t,
            operator_scale: 1.0 / (3.0 * params.routes as f64 * max_t),
        }
    }

    pub fn with_defaults(city: &City, params: &NdpParams, alpha: f64) -> Self {
        Self::new(city, params, alpha, DEFAULT_BETA, DEFAULT_TRANSFER_PENALTY)
    }
}

/// Cost components; exported as JSON with units in the field names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub alpha: f64,
    #[serde(rename = "C_p_seconds")]
    pub passenger: f64,
    #[serde(rename = "C_o_seconds")]
    pub operator: f64,
    #[serde(rename = "C_c")]
    pub constraint: f64,
    #[serde(rename = "C_total")]
    pub total: f64,
    #[serde(rename = "p_T")]
    pub transfer_penalty: f64,
}

pub fn total_cost(
    city: &City,
    network: &Network,
    params: &NdpParams,
    weights: &CostWeights,
) -> Result<CostBreakdown> {
    let assignment = assign_transit_times(city, network, weights.transfer_penalty)?;
    total_cost_with(city, network, params, weights, &assignment)
}

pub fn total_cost_with(
    city: &City,
    network: &Network,
    params: &NdpParams,
    weights: &CostWeights,
    assignment: &TransitAssignment,
) -> Result<CostBreakdown> {
    let passenger = passenger_cost(city, assignment)?;
    let operator = operator_cost(network, city)?;
    let constraint = constraint_cost(city, network, assignment, params);
    let a = weights.alpha;
    let total = a * weights.passenger_scale * passenger
        + (1.0 - a) * weights.operator_scale * operator
        + weights.beta * constraint;
    Ok(CostBreakdown {
        alpha: a,
        passenger,
        operator,
        constraint,
        total,
        transfer_penalty: weights.transfer_penalty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Path graph with 60 s legs and uniform demand.
    fn line(n: usize, demand: f64) -> City {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 60.0)).collect();
        let mut d = vec![demand; n * n];
        for i in 0..n {
            d[i * n + i] = 0.0;
        }
        City::new((0..n).map(|i| [i as f64 * 900.0, 0.0]).collect(), &edges, d, false).unwrap()
    }

    #[test]
    fn single_line_ride() {
        let c = line(3, 1.0);
        let a = assign_transit_times(&c, &Network::new(vec![vec![0, 1, 2]]), 300.0).unwrap();
        assert_eq!(a.time(0, 2), 120.0);
        assert_eq!(a.transfers(0, 2), 0);
        assert_eq!(a.time(2, 0), 120.0);
    }

    #[test]
    fn forced_transfer() {
        let c = line(3, 1.0);
        let a = assign_transit_times(&c, &Network::new(vec![vec![0, 1], vec![1, 2]]), 300.0).unwrap();
        assert_eq!(a.time(0, 2), 420.0);
        assert_eq!(a.transfers(0, 2), 1);
        assert_eq!(a.time(0, 1), 60.0);
    }

    #[test]
    fn unconnected_pairs_are_infinite() {
        let c = line(4, 1.0);
        let a = assign_transit_times(&c, &Network::new(vec![vec![0, 1]]), 300.0).unwrap();
        assert!(!a.connected(0, 2));
        assert!(a.connected(0, 1));
        assert_eq!(a.unconnected_pairs(), 5);
    }

    #[test]
    fn invalid_route_is_rejected() {
        let c = line(3, 1.0);
        let err = assign_transit_times(&c, &Network::new(vec![vec![0, 2]]), 300.0).unwrap_err();
        assert!(matches!(err, Error::InvalidNetwork(_)));
    }

    #[test]
    fn two_node_passenger_cost() {
        let n = 2;
        let c = City::new(
            vec![[0.0, 0.0], [9000.0, 0.0]],
            &[(0, 1, 600.0)],
            vec![0.0, 100.0, 100.0, 0.0],
            false,
        )
        .unwrap();
        let a = assign_transit_times(&c, &Network::new(vec![vec![0, 1]]), 300.0).unwrap();
        assert_eq!(a.len(), n);
        assert_eq!(passenger_cost(&c, &a).unwrap(), 600.0);
    }

    #[test]
    fn ideal_network_reaches_lower_bound() {
        // one route covering the whole line: every trip is a shortest street path
        let c = line(5, 1.0);
        let net = Network::new(vec![vec![0, 1, 2, 3, 4]]);
        let a = assign_transit_times(&c, &net, 300.0).unwrap();
        let n = c.len();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                num += c.demand(i, j) * c.travel_time(i, j);
                den += c.demand(i, j);
            }
        }
        assert!((passenger_cost(&c, &a).unwrap() - num / den).abs() < 1e-9);
    }

    #[test]
    fn four_node_mixed_itineraries() {
        // line 0-1-2-3; routes [0,1,2] and [2,3]
        let c = line(4, 0.0);
        let n = 4;
        let mut d = vec![0.0; 16];
        let set = |d: &mut Vec<f64>, i: usize, j: usize, v: f64| {
            d[i * n + j] = v;
            d[j * n + i] = v;
        };
        set(&mut d, 0, 1, 10.0);
        set(&mut d, 0, 3, 20.0);
        set(&mut d, 1, 3, 5.0);
        set(&mut d, 2, 3, 1.0);
        let c = City::new(c.positions().to_vec(), &[(0, 1, 60.0), (1, 2, 60.0), (2, 3, 60.0)], d, false)
            .unwrap();
        let net = Network::new(vec![vec![0, 1, 2], vec![2, 3]]);
        let a = assign_transit_times(&c, &net, 300.0).unwrap();
        // hand-expanded: 0-1 60 s; 0-3 120+300+60; 1-3 60+300+60; 2-3 60
        let expected = (2.0 * (10.0 * 60.0 + 20.0 * 480.0 + 5.0 * 420.0 + 60.0))
            / (2.0 * (10.0 + 20.0 + 5.0 + 1.0));
        assert!((passenger_cost(&c, &a).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn zero_connected_demand_is_degenerate() {
        let c = line(3, 1.0);
        let a = assign_transit_times(&c, &Network::new(vec![vec![1]]), 300.0).unwrap();
        assert!(matches!(passenger_cost(&c, &a), Err(Error::DegenerateNetwork)));
    }

    #[test]
    fn operator_cost_counts_both_directions() {
        let c = line(3, 1.0);
        assert_eq!(operator_cost(&Network::new(vec![vec![0, 1, 2]]), &c).unwrap(), 240.0);
        assert_eq!(operator_cost(&Network::default(), &c).unwrap(), 0.0);
    }

    #[test]
    fn constraint_cost_cases() {
        let c = line(10, 1.0);
        let full = Network::new(vec![(0..10).collect()]);
        let a = assign_transit_times(&c, &full, 300.0).unwrap();
        assert_eq!(constraint_cost(&c, &full, &a, &NdpParams::new(1, 2, 10)), 0.0);

        // a route over 0..=8 leaves node 9 alone: 9 of 45 pairs unconnected
        let partial = Network::new(vec![(0..9).collect()]);
        let a = assign_transit_times(&c, &partial, 300.0).unwrap();
        let cc = constraint_cost(&c, &partial, &a, &NdpParams::new(1, 2, 10));
        assert!((cc - 0.2).abs() < 1e-12);

        // S=2, one route MAX+3 long and one within bounds
        let long = Network::new(vec![(0..8).collect(), vec![8, 9]]);
        let a = assign_transit_times(&c, &long, 300.0).unwrap();
        let cc = constraint_cost(&c, &long, &a, &NdpParams::new(2, 2, 5));
        // 8 and 9 cannot reach 0..7: 16 of 45 pairs unconnected
        assert!((cc - (16.0 / 45.0 + 3.0 / 2.0)).abs() < 1e-12);

        // missing route adds one
        let a = assign_transit_times(&c, &full, 300.0).unwrap();
        assert_eq!(constraint_cost(&c, &full, &a, &NdpParams::new(2, 2, 10)), 1.0);
    }

    #[test]
    fn alpha_extremes_drop_terms() {
        let c = line(5, 3.0);
        let p = NdpParams::new(2, 2, 5);
        let net = Network::new(vec![vec![0, 1, 2], vec![2, 3, 4]]);
        let w0 = CostWeights::with_defaults(&c, &p, 0.0);
        let w1 = CostWeights::with_defaults(&c, &p, 1.0);
        let b0 = total_cost(&c, &net, &p, &w0).unwrap();
        let b1 = total_cost(&c, &net, &p, &w1).unwrap();
        assert_eq!(b0.total, w0.operator_scale * b0.operator + w0.beta * b0.constraint);
        assert_eq!(b1.total, w1.passenger_scale * b1.passenger + w1.beta * b1.constraint);
        let clamped = CostWeights::with_defaults(&c, &p, 1.7);
        assert_eq!(clamped.alpha, 1.0);
    }

    #[test]
    fn breakdown_json_field_names() {
        let b = CostBreakdown {
            alpha: 0.5,
            passenger: 1.0,
            operator: 2.0,
            constraint: 0.0,
            total: 3.0,
            transfer_penalty: 300.0,
        };
        let v: serde_json::Value = serde_json::to_value(b).unwrap();
        for key in ["alpha", "C_p_seconds", "C_o_seconds", "C_c", "C_total", "p_T"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}
