//! REINFORCE-with-baseline training on synthetic cities.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::city::{augment, generate_city, City, CityKind, NdpParams};
use crate::cost::{CostWeights, DEFAULT_BETA, DEFAULT_TRANSFER_PENALTY};
use crate::error::{Error, Result};
use crate::mdp::{rollout, Episode, Selection, UniformPolicy};
use crate::nn::adam::{clip_grad_norm, Adam};
use crate::nn::features::{
    baseline_input, city_descriptor, raw_features, MomentAccumulator, NormStats, DESCRIPTOR_FEATURES,
    EDGE_FEATURES, GLOBAL_FEATURES, NODE_FEATURES,
};
use crate::nn::graph::Graph;
use crate::nn::{save_params, NeuralPolicy, PolicyConfig, PolicyParams, Tensor};
use crate::rng::{self, Stream};

pub const VALIDATION_ALPHAS: [f64; 3] = [0.0, 0.5, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dataset_size: usize,
    pub city_nodes: usize,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(rename = "S")]
    pub routes: usize,
    #[serde(rename = "MIN")]
    pub min_len: usize,
    #[serde(rename = "MAX")]
    pub max_len: usize,
    pub policy_lr: f64,
    pub baseline_lr: f64,
    pub beta: f64,
    pub transfer_penalty: f64,
    pub grad_clip: f64,
    pub validation_fraction: f64,
    /// Consecutive worsening validation epochs tolerated before stopping.
    pub patience: usize,
    /// Cities whose rollouts are used to fit input normalization.
    pub norm_cities: usize,
    /// Street-edge deletion probability for the non-Voronoi generators.
    pub edge_deletion: f64,
    /// Measure the untrained policy on the validation set before training.
    pub validate_initial: bool,
    pub seed: u64,
    #[serde(flatten)]
    pub policy: PolicyConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dataset_size: 1 << 15,
            city_nodes: 20,
            batch_size: 64,
            epochs: 5,
            routes: 10,
            min_len: 2,
            max_len: 15,
            policy_lr: 1e-4,
            baseline_lr: 1e-3,
            beta: DEFAULT_BETA,
            transfer_penalty: DEFAULT_TRANSFER_PENALTY,
            grad_clip: 1.0,
            validation_fraction: 0.1,
            patience: 3,
            norm_cities: 256,
            edge_deletion: 0.1,
            validate_initial: true,
            seed: 0,
            policy: PolicyConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Route parameters used on the training cities; `MAX` is capped at `n`.
    pub fn ndp_params(&self) -> NdpParams {
        NdpParams::new(self.routes, self.min_len, self.max_len).clamped_to(self.city_nodes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_size < 10 {
            return Err(Error::InvalidParams("dataset needs at least 10 cities".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParams("batch size must be positive".into()));
        }
        if !(0.0 < self.validation_fraction && self.validation_fraction < 1.0) {
            return Err(Error::InvalidParams("validation fraction must be in (0, 1)".into()));
        }
        self.policy.validate()?;
        self.ndp_params().validate(self.city_nodes)
    }
}

/// Synthetic cities with a fixed train/validation split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub cities: Vec<City>,
    pub kinds: Vec<CityKind>,
    /// Cities before this index are for training, the rest for validation.
    pub split: usize,
}

impl Dataset {
    pub fn train(&self) -> &[City] {
        &self.cities[..self.split]
    }

    pub fn validation(&self) -> &[City] {
        &self.cities[self.split..]
    }
}

/// Generates `count` cities, each from a uniformly chosen generator. City `k`
/// depends only on `(seed, k)`.
pub fn build_dataset(count: usize, n: usize, edge_deletion: f64, validation_fraction: f64, seed: u64) -> Result<Dataset> {
    if count < 10 {
        return Err(Error::InvalidParams("dataset needs at least 10 cities".into()));
    }
    let made: Vec<(CityKind, City)> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, Stream::Dataset, &[k as u64]);
            let kind = CityKind::ALL[r.gen_range(0..CityKind::ALL.len())];
            generate_city(kind, n, edge_deletion, &mut r).map(|c| (kind, c))
        })
        .collect::<Result<_>>()?;
    let val = ((count as f64 * validation_fraction).round() as usize).clamp(1, count - 1);
    let (kinds, cities) = made.into_iter().unzip();
    Ok(Dataset {
        cities,
        kinds,
        split: count - val,
    })
}

/// Fits standardization statistics on states visited by uniform-random
/// rollouts over augmented copies of `cities` with random `α`.
pub fn fit_normalization(cities: &[City], params: NdpParams, beta: f64, transfer_penalty: f64, seed: u64) -> Result<NormStats> {
    let mut node = MomentAccumulator::new(NODE_FEATURES);
    let mut edge = MomentAccumulator::new(EDGE_FEATURES);
    let mut global = MomentAccumulator::new(GLOBAL_FEATURES);
    let mut descriptor = MomentAccumulator::new(DESCRIPTOR_FEATURES);
    for (k, city) in cities.iter().enumerate() {
        let mut r = rng::stream(seed, Stream::Augment, &[u64::MAX, k as u64]);
        let c = augment(city, &mut r);
        let ndp = params.clamped_to(c.len());
        let alpha: f64 = r.gen();
        let weights = CostWeights::new(&c, &ndp, alpha, beta, transfer_penalty);
        let ep = rollout(&c, &UniformPolicy, ndp, &weights, Selection::Sample, &mut r)?;
        descriptor.add_row(&city_descriptor(&c, &ndp));
        for d in &ep.decisions {
            let f = raw_features(&c, &d.state, alpha);
            node.add_rows(&f.node);
            edge.add_rows(&f.edge);
            global.add_rows(&f.global);
        }
    }
    Ok(NormStats {
        node: node.finish(),
        edge: edge.finish(),
        global: global.finish(),
        descriptor: descriptor.finish(),
    })
}

/// Samples one episode and returns it with the gradient of its summed
/// action log-probability with respect to every policy tensor.
pub fn episode_gradient<R: Rng + ?Sized>(
    params: &PolicyParams,
    city: &City,
    ndp: NdpParams,
    weights: &CostWeights,
    rng: &mut R,
) -> Result<(Episode, Vec<Tensor>)> {
    let policy = NeuralPolicy::recording(params);
    let ep = rollout(city, &policy, ndp, weights, Selection::Sample, rng)?;
    let (mut g, outputs) = policy.into_tape();
    let queried: Vec<usize> = ep
        .decisions
        .iter()
        .filter(|d| d.n_candidates > 1)
        .map(|d| d.chosen_index)
        .collect();
    if queried.len() != outputs.len() {
        return Err(Error::Contract("policy queries do not match recorded decisions".into()));
    }
    let mut grads = params.policy.zeros_like();
    if outputs.is_empty() {
        return Ok((ep, grads));
    }
    let picks: Vec<_> = outputs.iter().zip(&queried).map(|(&o, &c)| g.pick(o, 0, c)).collect();
    let row = g.concat_cols(&picks);
    let total = g.sum(row);
    for (i, t) in g.backward(total) {
        grads[i].add_assign(&t);
    }
    Ok((ep, grads))
}

/// Re-scores the actions of a recorded episode; forced decisions count as 0.
pub fn episode_log_prob(params: &PolicyParams, city: &City, ep: &Episode) -> Result<f64> {
    use crate::mdp::{enumerate_extensions, ConstructionPolicy, DecisionKind};
    let policy = NeuralPolicy::new(params);
    let mut total = 0.0;
    for d in ep.decisions.iter().filter(|d| d.n_candidates > 1) {
        total += match d.kind {
            DecisionKind::Ext => {
                let cands = enumerate_extensions(&d.state, city);
                policy.extension_log_probs(city, &d.state, &cands)?[d.chosen_index]
            }
            DecisionKind::Halt => {
                let (c, h) = policy.halt_log_probs(city, &d.state)?;
                [c, h][d.chosen_index]
            }
        };
    }
    Ok(total)
}

/// Baseline prediction and the gradient of `(target - prediction)²`.
pub fn baseline_gradient(params: &PolicyParams, input: &Tensor, target: f64) -> (f64, Vec<Tensor>) {
    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let b = params.baseline_forward(&mut g, x);
    let t = g.constant(Tensor::scalar(-target));
    let diff = g.add(b, t);
    let sq = g.mul(diff, diff);
    let mut grads = params.baseline.zeros_like();
    for (i, t) in g.backward(sq) {
        grads[i].add_assign(&t);
    }
    (g.value(b).data[0], grads)
}

pub fn baseline_value(params: &PolicyParams, input: &Tensor) -> f64 {
    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let b = params.baseline_forward(&mut g, x);
    g.value(b).data[0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mean: f64,
    /// `(α, mean cost)` per grid point.
    pub per_alpha: Vec<(f64, f64)>,
}

/// Mean cost of one greedy rollout per (city, α). Route parameters are
/// capped at each city's size.
pub fn validate(
    params: &PolicyParams,
    cities: &[City],
    alphas: &[f64],
    ndp: NdpParams,
    beta: f64,
    transfer_penalty: f64,
) -> Result<ValidationReport> {
    if cities.is_empty() || alphas.is_empty() {
        return Err(Error::InvalidParams("validation needs cities and α values".into()));
    }
    let costs: Vec<Vec<f64>> = cities
        .par_iter()
        .map(|city| {
            let ndp = ndp.clamped_to(city.len());
            let policy = NeuralPolicy::new(params);
            let mut r = rng::from_seed(0);
            alphas
                .iter()
                .map(|&a| {
                    let w = CostWeights::new(city, &ndp, a, beta, transfer_penalty);
                    rollout(city, &policy, ndp, &w, Selection::Greedy, &mut r).map(|e| e.cost.total)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let per_alpha: Vec<(f64, f64)> = alphas
        .iter()
        .enumerate()
        .map(|(k, &a)| (a, costs.iter().map(|c| c[k]).sum::<f64>() / cities.len() as f64))
        .collect();
    let mean = per_alpha.iter().map(|p| p.1).sum::<f64>() / alphas.len() as f64;
    Ok(ValidationReport { mean, per_alpha })
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_cost_mean: f64,
    pub val_cost_mean: f64,
    pub val_cost_alpha0: f64,
    pub val_cost_alpha05: f64,
    pub val_cost_alpha1: f64,
    pub wall_seconds: f64,
}

impl EpochRecord {
    fn new(epoch: usize, train_cost_mean: f64, v: &ValidationReport, wall_seconds: f64) -> Self {
        let at = |a: f64| v.per_alpha.iter().find(|p| p.0 == a).map_or(f64::NAN, |p| p.1);
        EpochRecord {
            epoch,
            train_cost_mean,
            val_cost_mean: v.mean,
            val_cost_alpha0: at(0.0),
            val_cost_alpha05: at(0.5),
            val_cost_alpha1: at(1.0),
            wall_seconds,
        }
    }
}

pub fn write_history_csv(path: &Path, rows: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: PolicyParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    /// Validation of the randomly initialized policy, if requested.
    pub initial_validation: Option<ValidationReport>,
}

/// Trains a policy from scratch on a generated dataset.
pub fn train(config: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let data = build_dataset(
        config.dataset_size,
        config.city_nodes,
        config.edge_deletion,
        config.validation_fraction,
        config.seed,
    )?;
    train_on(config, &data, out_dir)
}

/// Trains on an existing dataset.
pub fn train_on(config: &TrainConfig, data: &Dataset, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let start = Instant::now();
    let ndp = config.ndp_params();
    let norm_sample = &data.train()[..config.norm_cities.clamp(1, data.split)];
    let stats = fit_normalization(norm_sample, ndp, config.beta, config.transfer_penalty, config.seed)?;
    let mut params = PolicyParams::init(config.policy, config.seed)?.with_norm_stats(stats);
    let val = |p: &PolicyParams| validate(p, data.validation(), &VALIDATION_ALPHAS, ndp, config.beta, config.transfer_penalty);

    let initial_validation = if config.validate_initial {
        let v = val(&params)?;
        log::info!("untrained validation cost {:.4}", v.mean);
        Some(v)
    } else {
        None
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut policy_opt = Adam::new(config.policy_lr, &params.policy.tensors);
    let mut baseline_opt = Adam::new(config.baseline_lr, &params.baseline.tensors);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, PolicyParams)> = None;
    let mut worsening = 0;
    let mut order: Vec<usize> = (0..data.split).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng::stream(config.seed, Stream::Shuffle, &[epoch as u64]));
        let mut cost_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let tag = [epoch as u64, b as u64];
            let results: Vec<(f64, f64, Vec<Tensor>, Vec<Tensor>)> = batch
                .par_iter()
                .enumerate()
                .map(|(k, &ci)| {
                    let mut r = rng::stream(config.seed, Stream::Rollout, &[epoch as u64, b as u64, k as u64]);
                    let alpha: f64 = rng::stream(config.seed, Stream::Alpha, &[tag[0], tag[1], k as u64]).gen();
                    let city = augment(
                        &data.cities[ci],
                        &mut rng::stream(config.seed, Stream::Augment, &[tag[0], tag[1], k as u64]),
                    );
                    let w = CostWeights::new(&city, &ndp, alpha, config.beta, config.transfer_penalty);
                    let (ep, pg) = episode_gradient(&params, &city, ndp, &w, &mut r)?;
                    let input = baseline_input(&city, &ndp, alpha, params.norm_stats.as_ref().expect("stats set"));
                    let ret = ep.reward();
                    let (b, bg) = baseline_gradient(&params, &input, ret);
                    Ok((ep.cost.total, ret - b, pg, bg))
                })
                .collect::<Result<_>>()?;

            let scale = 1.0 / batch.len() as f64;
            let mut pgrad = params.policy.zeros_like();
            let mut bgrad = params.baseline.zeros_like();
            for (cost, adv, pg, bg) in &results {
                if !adv.is_finite() || !cost.is_finite() {
                    return Err(Error::TrainingAborted(format!(
                        "non-finite loss at epoch {epoch} batch {b}: cost {cost}, advantage {adv}"
                    )));
                }
                cost_sum += cost;
                for (acc, g) in pgrad.iter_mut().zip(pg) {
                    acc.add_scaled(g, -adv * scale);
                }
                for (acc, g) in bgrad.iter_mut().zip(bg) {
                    acc.add_scaled(g, scale);
                }
            }
            let pn = clip_grad_norm(&mut pgrad, config.grad_clip);
            let bn = clip_grad_norm(&mut bgrad, config.grad_clip);
            if !pn.is_finite() || !bn.is_finite() {
                return Err(Error::TrainingAborted(format!(
                    "non-finite gradient norm at epoch {epoch} batch {b}: policy {pn}, baseline {bn}"
                )));
            }
            policy_opt.step(&mut params.policy.tensors, &pgrad);
            baseline_opt.step(&mut params.baseline.tensors, &bgrad);
        }

        let v = val(&params)?;
        let record = EpochRecord::new(epoch, cost_sum / data.split as f64, &v, start.elapsed().as_secs_f64());
        log::info!(
            "epoch {epoch}: train {:.4} validation {:.4} ({:.0}s)",
            record.train_cost_mean,
            record.val_cost_mean,
            record.wall_seconds
        );
        if let Some(dir) = out_dir {
            save_params(&params, &dir.join(format!("epoch_{epoch}.json")))?;
        }
        let prev = history.last().map(|r: &EpochRecord| r.val_cost_mean);
        history.push(record);
        if best.as_ref().is_none_or(|(c, _, _)| v.mean < *c) {
            best = Some((v.mean, epoch, params.clone()));
        }
        worsening = match prev {
            Some(p) if v.mean > p => worsening + 1,
            _ => 0,
        };
        if let Some(dir) = out_dir {
            write_history_csv(&dir.join("history.csv"), &history)?;
            let e = best.as_ref().map_or(0, |b| b.1);
            std::fs::write(dir.join("best_epoch.txt"), format!("{e}\n")).map_err(|e| Error::io(dir, e))?;
        }
        if worsening >= config.patience {
            log::warn!("validation cost worsened {worsening} epochs in a row; stopping early");
            break;
        }
    }

    let (best_params, best_epoch) = match best {
        Some((_, e, p)) => (p, e),
        None => (params, 0),
    };
    if let Some(dir) = out_dir {
        save_params(&best_params, &dir.join("best.json"))?;
    }
    Ok(TrainOutcome {
        best: best_params,
        best_epoch,
        history,
        initial_validation,
    })
}
