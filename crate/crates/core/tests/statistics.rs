//! Frequency checks on the random components. Seeds are fixed, so these are
//! deterministic; the tolerances are several standard errors wide.

use rand::Rng;
use tndp_core::city::generate_city;
use tndp_core::cost::total_cost;
use tndp_core::evo::{mutate_type1, refill_weight, selection_stage, Individual};
use tndp_core::nn::Tensor;
use tndp_core::rng;
use tndp_core::train::{build_dataset, episode_gradient, fit_normalization};
use tndp_core::{City, CityKind, CostWeights, NdpParams, Network, PolicyConfig, PolicyParams};

#[test]
fn dataset_draws_generator_kinds_uniformly() {
    let data = build_dataset(4096, 8, 0.1, 0.1, 11).unwrap();
    for k in CityKind::ALL {
        let f = data.kinds.iter().filter(|&&x| x == k).count() as f64 / 4096.0;
        assert!((f - 0.25).abs() <= 0.03, "{} frequency {f}", k.name());
    }
}

#[test]
fn type1_picks_routes_uniformly() {
    let c = generate_city(CityKind::Grid4, 25, 0.0, &mut rng::from_seed(3)).unwrap();
    // Two-stop routes: a replacement almost always differs from the original.
    let net = Network::new(vec![vec![0, 1], vec![6, 7], vec![12, 13], vec![18, 19], vec![23, 24]]);
    let mut hits = [0usize; 5];
    let mut r = rng::from_seed(4);
    let mut counted = 0;
    for _ in 0..1000 {
        let out = mutate_type1(&net, &c, &mut r);
        let changed: Vec<usize> = (0..5).filter(|&k| out.routes[k] != net.routes[k]).collect();
        assert!(changed.len() <= 1);
        if let [k] = changed[..] {
            hits[k] += 1;
            counted += 1;
        }
    }
    assert!(counted > 900);
    for h in hits {
        let f = h as f64 / counted as f64;
        assert!((f - 0.2).abs() <= 0.05, "{hits:?}");
    }
}

fn individual(c: &City, params: &NdpParams, w: &CostWeights, routes: Vec<Vec<usize>>) -> Individual {
    let network = Network::new(routes);
    let cost = total_cost(c, &network, params, w).unwrap();
    Individual {
        network,
        cost,
        dirty: false,
    }
}

#[test]
fn refill_follows_inverse_cost_weights() {
    // Three individuals: the cheapest never dies, the most expensive always
    // does, the middle one survives about half the time. When it survives,
    // the freed slot is refilled from {cheapest, middle} in proportion to 1/C.
    let c = generate_city(CityKind::Grid4, 16, 0.0, &mut rng::from_seed(5)).unwrap();
    let params = NdpParams::new(2, 2, 16);
    let w = CostWeights::with_defaults(&c, &params, 1.0);
    let mut pop = vec![
        individual(&c, &params, &w, vec![vec![0, 1, 2, 3, 7, 11, 15], vec![12, 8, 4, 5, 6, 10, 14, 13, 9]]),
        individual(&c, &params, &w, vec![vec![0, 1, 2, 3, 7, 11, 15], vec![12, 8, 4, 5, 9, 13]]),
        individual(&c, &params, &w, vec![vec![0, 1], vec![14, 15]]),
    ];
    pop.sort_by(|a, b| a.total().total_cmp(&b.total()));
    let costs: Vec<f64> = pop.iter().map(Individual::total).collect();
    assert!(costs[0] < costs[1] && costs[1] < costs[2], "{costs:?}");
    let expect = refill_weight(costs[0]) / (refill_weight(costs[0]) + refill_weight(costs[1]));

    let mut r = rng::from_seed(6);
    let (mut middle_survived, mut from_best) = (0usize, 0usize);
    for _ in 0..100_000 {
        let mut p = pop.clone();
        selection_stage(&mut p, &mut r);
        assert_eq!(p[0].network, pop[0].network);
        if p[1].network == pop[1].network {
            middle_survived += 1;
            from_best += usize::from(p[2].network == pop[0].network);
        }
    }
    let f = from_best as f64 / middle_survived as f64;
    assert!((f - expect).abs() <= 0.02, "refill from best {f}, expected {expect}");
}

fn flatten(gs: &[Tensor]) -> Vec<f64> {
    gs.iter().flat_map(|t| t.data.iter().copied()).collect()
}

#[test]
fn mean_baseline_reduces_gradient_variance() {
    let mut r = rng::from_seed(7);
    let c = generate_city(CityKind::NearestNeighbor4, 7, 0.0, &mut r).unwrap();
    let ndp = NdpParams::new(2, 2, 4);
    let config = PolicyConfig {
        layers: 1,
        heads: 2,
        embed_dim: 8,
        ff_dim: 16,
        head_hidden: 8,
        baseline_hidden: 8,
    };
    let stats = fit_normalization(std::slice::from_ref(&c), ndp, 5.0, 300.0, 0).unwrap();
    let p = PolicyParams::init(config, 2).unwrap().with_norm_stats(stats);
    let w = CostWeights::with_defaults(&c, &ndp, r.gen());
    let samples: Vec<(f64, Vec<f64>)> = (0..1000)
        .map(|_| {
            let (ep, g) = episode_gradient(&p, &c, ndp, &w, &mut r).unwrap();
            (ep.reward(), flatten(&g))
        })
        .collect();
    let mean_return = samples.iter().map(|s| s.0).sum::<f64>() / samples.len() as f64;
    let total_variance = |baseline: f64| {
        let dim = samples[0].1.len();
        let k = samples.len() as f64;
        let mut mean = vec![0.0; dim];
        for (ret, g) in &samples {
            for (m, v) in mean.iter_mut().zip(g) {
                *m += (ret - baseline) * v / k;
            }
        }
        samples
            .iter()
            .map(|(ret, g)| g.iter().zip(&mean).map(|(v, m)| ((ret - baseline) * v - m).powi(2)).sum::<f64>())
            .sum::<f64>()
            / k
    };
    let (with, without) = (total_variance(mean_return), total_variance(0.0));
    assert!(with < without, "variance with baseline {with}, without {without}");
}
