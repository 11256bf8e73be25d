//! Evolutionary improvement of transit networks.
//!
//! Each iteration runs a mutation stage (half the population gets the primary
//! mutator, half the terminal-extension mutator; a candidate replaces its
//! parent only if strictly cheaper) followed by a selection stage in which
//! expensive solutions die and are replaced by copies of cheap survivors.
//! The primary mutator is either the shortest-path replacement (`Ea`) or a
//! policy rollout that regenerates one route (`Nea`).

use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::city::{City, NdpParams};
use crate::cost::{total_cost, CostBreakdown, CostWeights, DEFAULT_BETA, DEFAULT_TRANSFER_PENALTY};
use crate::error::{Error, Result};
use crate::mdp::{rollout, rollout_single_route, ConstructionPolicy, Selection, UniformPolicy};
use crate::network::Network;
use crate::nn::{NeuralPolicy, PolicyParams};
use crate::rng::{self, Stream};

const DEATH_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EaMode {
    /// Shortest-path replacement plus terminal extension.
    Ea,
    /// Policy route regeneration plus terminal extension.
    Nea,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EaConfig {
    /// Population size `B`.
    pub population: usize,
    /// Mutation attempts per individual and stage, `N_m`.
    pub mutation_attempts: usize,
    /// Iterations `I`.
    pub iterations: usize,
    pub mode: EaMode,
    pub alpha: f64,
    pub beta: f64,
    pub transfer_penalty: f64,
    /// Probability that the terminal-extension mutator trims instead.
    pub delete_probability: f64,
    pub seed: u64,
}

impl Default for EaConfig {
    fn default() -> Self {
        EaConfig {
            population: 10,
            mutation_attempts: 10,
            iterations: 400,
            mode: EaMode::Ea,
            alpha: 1.0,
            beta: DEFAULT_BETA,
            transfer_penalty: DEFAULT_TRANSFER_PENALTY,
            delete_probability: 0.2,
            seed: 0,
        }
    }
}

impl EaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidParams("population must have at least 2 members".into()));
        }
        if !(0.0..=1.0).contains(&self.delete_probability) {
            return Err(Error::InvalidParams("delete probability must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn weights(&self, city: &City, params: &NdpParams) -> CostWeights {
        CostWeights::new(city, params, self.alpha, self.beta, self.transfer_penalty)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub network: Network,
    pub cost: CostBreakdown,
    /// Set when `network` changed after `cost` was computed.
    pub dirty: bool,
}

impl Individual {
    pub fn evaluate(network: Network, city: &City, params: &NdpParams, weights: &CostWeights) -> Result<Self> {
        let cost = total_cost(city, &network, params, weights)?;
        Ok(Individual {
            network,
            cost,
            dirty: false,
        })
    }

    pub fn total(&self) -> f64 {
        self.cost.total
    }
}

/// `B` networks from uniform-random construction rollouts; individual `b`
/// uses its own stream so the population does not depend on the mode.
pub fn init_population(city: &City, params: NdpParams, config: &EaConfig) -> Result<Vec<Individual>> {
    config.validate()?;
    params.validate(city.len())?;
    let weights = config.weights(city, &params);
    (0..config.population)
        .map(|b| {
            let mut r = rng::stream(config.seed, Stream::Init, &[b as u64]);
            let ep = rollout(city, &UniformPolicy, params, &weights, Selection::Sample, &mut r)?;
            Ok(Individual {
                network: ep.network,
                cost: ep.cost,
                dirty: false,
            })
        })
        .collect()
}

fn pick_terminal<R: Rng + ?Sized>(network: &Network, rng: &mut R) -> (usize, bool) {
    let r = rng.gen_range(0..network.len());
    let front = rng.gen_bool(0.5);
    (r, front)
}

/// Replaces a random route by the shortest path from one of its terminals to
/// a random other node.
pub fn mutate_type1<R: Rng + ?Sized>(network: &Network, city: &City, rng: &mut R) -> Network {
    let mut out = network.clone();
    if out.is_empty() || city.len() < 2 {
        return out;
    }
    let (r, front) = pick_terminal(network, rng);
    let route = &network.routes[r];
    let i = if front { route[0] } else { *route.last().expect("non-empty route") };
    let mut j = rng.gen_range(0..city.len() - 1);
    if j >= i {
        j += 1;
    }
    out.routes[r] = city.paths().canonical_path(i, j);
    out
}

/// Trims a random terminal with probability `delete_probability`, otherwise
/// extends it to a random street neighbour not already on the route.
pub fn mutate_type2<R: Rng + ?Sized>(network: &Network, city: &City, delete_probability: f64, rng: &mut R) -> Network {
    let mut out = network.clone();
    if out.is_empty() {
        return out;
    }
    let (r, front) = pick_terminal(network, rng);
    let route = &mut out.routes[r];
    if rng.gen_bool(delete_probability) {
        if route.len() > 1 {
            if front {
                route.remove(0);
            } else {
                route.pop();
            }
        }
        return out;
    }
    let i = if front { route[0] } else { *route.last().expect("non-empty route") };
    let options: Vec<usize> = city
        .neighbors(i)
        .iter()
        .map(|&(j, _)| j)
        .filter(|j| !route.contains(j))
        .collect();
    if let Some(&j) = options.choose(rng) {
        if front {
            route.insert(0, j);
        } else {
            route.push(j);
        }
    }
    out
}

/// Removes a random route and lets `policy` build its replacement given the
/// remaining routes. The new route takes the removed route's position.
#[allow(clippy::too_many_arguments)]
pub fn mutate_neural<P, R>(
    network: &Network,
    city: &City,
    policy: &P,
    params: NdpParams,
    alpha: f64,
    selection: Selection,
    rng: &mut R,
) -> Result<Network>
where
    P: ConstructionPolicy + ?Sized,
    R: Rng + ?Sized,
{
    if network.len() != params.routes {
        return Err(Error::Contract(format!(
            "neural mutation needs {} routes, found {}",
            params.routes,
            network.len()
        )));
    }
    let r = rng.gen_range(0..network.len());
    let mut routes = network.routes.clone();
    routes.remove(r);
    let partial = Network::new(routes);
    let (new_route, _) = rollout_single_route(city, &partial, policy, params, alpha, selection, rng)?;
    let mut routes = partial.routes;
    routes.insert(r, new_route);
    Ok(Network::new(routes))
}

/// Which individuals get the primary mutator this iteration: a random half.
pub fn partition(population: usize, rng: &mut impl Rng) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..population).collect();
    idx.shuffle(rng);
    let mut primary = vec![false; population];
    for &b in &idx[..population / 2] {
        primary[b] = true;
    }
    primary
}

/// Applies `N_m` keep-if-better mutation attempts to every individual.
pub fn mutation_stage(
    population: &mut [Individual],
    city: &City,
    params: NdpParams,
    config: &EaConfig,
    policy: Option<&PolicyParams>,
    iteration: usize,
) -> Result<()> {
    if config.mode == EaMode::Nea && policy.is_none() {
        return Err(Error::InvalidParams("NEA mode needs a policy".into()));
    }
    let weights = config.weights(city, &params);
    let primary = partition(
        population.len(),
        &mut rng::stream(config.seed, Stream::Partition, &[iteration as u64]),
    );
    population
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(b, ind)| -> Result<()> {
            let tag = [iteration as u64, b as u64];
            let neural = policy.map(NeuralPolicy::new);
            let mut r = if primary[b] {
                rng::stream(config.seed, Stream::PrimaryMutator, &tag)
            } else {
                rng::stream(config.seed, Stream::Type2Mutator, &tag)
            };
            if ind.dirty {
                *ind = Individual::evaluate(ind.network.clone(), city, &params, &weights)?;
            }
            for _ in 0..config.mutation_attempts {
                let candidate = match (primary[b], config.mode) {
                    (false, _) => mutate_type2(&ind.network, city, config.delete_probability, &mut r),
                    (true, EaMode::Ea) => mutate_type1(&ind.network, city, &mut r),
                    (true, EaMode::Nea) => mutate_neural(
                        &ind.network,
                        city,
                        neural.as_ref().expect("checked above"),
                        params,
                        config.alpha,
                        Selection::Sample,
                        &mut r,
                    )?,
                };
                // Cost errors (no connected demand at all) count as rejections.
                if let Ok(c) = total_cost(city, &candidate, &params, &weights) {
                    if c.total < ind.cost.total {
                        ind.network = candidate;
                        ind.cost = c;
                    }
                }
            }
            Ok(())
        })
}

/// Death probability of each individual; the first cheapest never dies.
pub fn death_probabilities(costs: &[f64]) -> Vec<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &c in costs {
        lo = lo.min(c);
        hi = hi.max(c);
    }
    let best = costs.iter().position(|&c| c == lo).unwrap_or(0);
    costs
        .iter()
        .enumerate()
        .map(|(b, &c)| if b == best { 0.0 } else { (c - lo) / (hi - lo + DEATH_EPS) })
        .collect()
}

/// Refill weight of a survivor, inversely proportional to its cost.
pub fn refill_weight(cost: f64) -> f64 {
    1.0 / cost.max(DEATH_EPS)
}

/// Kills individuals by cost and refills the slots with copies of survivors.
pub fn selection_stage<R: Rng + ?Sized>(population: &mut [Individual], rng: &mut R) {
    let costs: Vec<f64> = population.iter().map(Individual::total).collect();
    let p_die = death_probabilities(&costs);
    let alive: Vec<bool> = p_die.iter().map(|&p| rng.gen::<f64>() >= p).collect();
    let survivors: Vec<usize> = (0..population.len()).filter(|&b| alive[b]).collect();
    let weights: Vec<f64> = survivors.iter().map(|&b| refill_weight(costs[b])).collect();
    let pick = WeightedIndex::new(&weights).expect("the best individual always survives");
    let parents: Vec<Individual> = population.to_vec();
    for (b, slot) in population.iter_mut().enumerate() {
        if !alive[b] {
            *slot = parents[survivors[pick.sample(rng)]].clone();
        }
    }
}

/// One row of the run history. `best_*` describe the best network seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "best_C")]
    pub best_c: f64,
    #[serde(rename = "mean_C")]
    pub mean_c: f64,
    #[serde(rename = "best_Cp_minutes")]
    pub best_cp_minutes: f64,
    #[serde(rename = "best_Co_minutes")]
    pub best_co_minutes: f64,
    #[serde(rename = "best_Cc")]
    pub best_cc: f64,
}

#[derive(Debug, Clone)]
pub struct EaOutcome {
    pub best: Individual,
    /// Row 0 is the initial population, row `k` follows iteration `k`.
    pub history: Vec<IterationRecord>,
    pub population: Vec<Individual>,
}

fn record(iter: usize, best: &Individual, population: &[Individual]) -> IterationRecord {
    IterationRecord {
        iter,
        best_c: best.total(),
        mean_c: population.iter().map(Individual::total).sum::<f64>() / population.len() as f64,
        best_cp_minutes: best.cost.passenger / 60.0,
        best_co_minutes: best.cost.operator / 60.0,
        best_cc: best.cost.constraint,
    }
}

fn update_best(best: &mut Individual, population: &[Individual]) {
    for ind in population {
        if ind.total() < best.total() {
            *best = ind.clone();
        }
    }
}

/// Runs `I` mutation/selection iterations and returns the best network seen.
pub fn run(city: &City, params: NdpParams, config: &EaConfig, policy: Option<&PolicyParams>) -> Result<EaOutcome> {
    if config.mode == EaMode::Nea && policy.is_none() {
        return Err(Error::InvalidParams("NEA mode needs a policy".into()));
    }
    let mut population = init_population(city, params, config)?;
    let mut best = population[0].clone();
    update_best(&mut best, &population);
    let mut history = vec![record(0, &best, &population)];
    for it in 1..=config.iterations {
        mutation_stage(&mut population, city, params, config, policy, it)?;
        update_best(&mut best, &population);
        selection_stage(
            &mut population,
            &mut rng::stream(config.seed, Stream::Selection, &[it as u64]),
        );
        history.push(record(it, &best, &population));
        log::debug!("iteration {it}: best {:.5}", best.total());
    }
    Ok(EaOutcome {
        best,
        history,
        population,
    })
}

pub fn write_history_csv(path: &Path, rows: &[IterationRecord]) -> Result<()> {
    let err = |e: csv::Error| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
