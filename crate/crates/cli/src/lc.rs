//! Learned construction: best of `K` sampled policy rollouts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tndp_core::mdp::rollout;
use tndp_core::rng::{self, Stream};
use tndp_core::{City, CostBreakdown, CostWeights, Error, NdpParams, Network, NeuralPolicy, PolicyParams, Result, Selection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcOutcome {
    pub network: Network,
    pub cost: CostBreakdown,
    /// Total cost of every rollout, in rollout order.
    pub costs: Vec<f64>,
}

/// Rollout `k` draws from its own stream, so the first `K` rollouts are the
/// same whatever the total count.
pub fn learned_construction(
    city: &City,
    params: NdpParams,
    policy: &PolicyParams,
    rollouts: usize,
    weights: &CostWeights,
    seed: u64,
) -> Result<LcOutcome> {
    if rollouts == 0 {
        return Err(Error::InvalidParams("need at least one rollout".into()));
    }
    let episodes: Vec<_> = (0..rollouts)
        .into_par_iter()
        .map(|k| {
            let p = NeuralPolicy::new(policy);
            let mut r = rng::stream(seed, Stream::Rollout, &[k as u64]);
            rollout(city, &p, params, weights, Selection::Sample, &mut r).map(|e| (e.network, e.cost))
        })
        .collect::<Result<_>>()?;
    let costs: Vec<f64> = episodes.iter().map(|e| e.1.total).collect();
    let best = (0..costs.len())
        .min_by(|&a, &b| costs[a].total_cmp(&costs[b]))
        .expect("at least one rollout");
    let (network, cost) = episodes.into_iter().nth(best).expect("index in range");
    Ok(LcOutcome { network, cost, costs })
}
