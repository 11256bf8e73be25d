//! Constraint and cost report for a network file.

use serde::{Deserialize, Serialize};
use tndp_core::cost::total_cost;
use tndp_core::network::{check_constraints, ConstraintReport};
use tndp_core::{City, CostBreakdown, CostWeights, NdpParams, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintOutcome {
    pub index: u8,
    pub name: String,
    pub pass: bool,
    pub details: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    pub all_pass: bool,
    pub constraints: Vec<ConstraintOutcome>,
    pub checks: ConstraintReport,
    pub cost: Option<CostBreakdown>,
    pub cost_error: Option<String>,
    pub passenger_minutes: Option<f64>,
    pub operator_minutes: Option<f64>,
}

pub fn validate_network(city: &City, network: &Network, params: &NdpParams, weights: &CostWeights) -> NetworkReport {
    let c = check_constraints(city, network, params);
    let constraints = vec![
        ConstraintOutcome {
            index: 1,
            name: "every node reachable from every other by transit".into(),
            pass: c.all_connected,
            details: if c.all_connected {
                vec![]
            } else {
                vec![format!("{} unconnected node pairs", c.unconnected_pairs)]
            },
        },
        ConstraintOutcome {
            index: 2,
            name: "exactly S routes".into(),
            pass: c.route_count_ok,
            details: if c.route_count_ok {
                vec![]
            } else {
                vec![format!("{} routes, expected {}", c.route_count, c.expected_routes)]
            },
        },
        ConstraintOutcome {
            index: 3,
            name: "MIN <= route length <= MAX".into(),
            pass: c.length_violations.is_empty(),
            details: c
                .length_violations
                .iter()
                .map(|v| format!("route {} has {} stops", v.route, v.len))
                .collect(),
        },
        ConstraintOutcome {
            index: 4,
            name: "no stop repeated within a route".into(),
            pass: c.repeated_stops.is_empty(),
            details: c
                .repeated_stops
                .iter()
                .map(|v| format!("route {} visits node {} more than once", v.route, v.node))
                .collect(),
        },
        ConstraintOutcome {
            index: 5,
            name: "consecutive stops joined by a street edge".into(),
            pass: c.skipped_links.is_empty(),
            details: c
                .skipped_links
                .iter()
                .map(|v| format!("route {}: nodes {} and {} are not street-adjacent", v.route, v.from, v.to))
                .collect(),
        },
    ];
    let (cost, cost_error) = match total_cost(city, network, params, weights) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    NetworkReport {
        all_pass: c.all_pass(),
        constraints,
        checks: c,
        passenger_minutes: cost.map(|b| b.passenger / 60.0),
        operator_minutes: cost.map(|b| b.operator / 60.0),
        cost,
        cost_error,
    }
}
