//! Acceptance suite. Each test prints one `PASS`/`FAIL` line; run with
//! `--nocapture` to see them. Tests that need the published benchmark files
//! (and, for two of them, a fully trained policy) are ignored by default and
//! run with `--include-ignored`.

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use tndp_cli::city_source::default_benchmark_dir;
use tndp_cli::lc::learned_construction;
use tndp_cli::sweep::{mean_std, run_seed};
use tndp_core::city::{augment_with, generate_city, load_benchmark_files, Augmentation};
use tndp_core::cost::{assign_transit_times, total_cost};
use tndp_core::evo::{self, init_population, mutate_neural, mutate_type1, mutate_type2, mutation_stage, selection_stage};
use tndp_core::mdp::{enumerate_extensions, rollout, ConstructionPolicy, DecisionKind, UniformPolicy};
use tndp_core::nn::load_params;
use tndp_core::rng::{self, Stream, StreamRng};
use tndp_core::train::{self, episode_gradient, episode_log_prob, fit_normalization};
use tndp_core::{
    Benchmark, City, CityKind, CostWeights, EaConfig, EaMode, MdpState, NdpParams, Network, NeuralPolicy, PolicyConfig,
    PolicyParams, Selection, TrainConfig,
};

const POLICY_ENV: &str = "TNDP_POLICY";
const SUITE_SEED: u64 = 20_240_617;

fn verdict(id: u8, title: &str, pass: bool, detail: String) {
    let mark = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {id:>2} {mark}: {title} ({detail})");
    assert!(pass, "acceptance {id} failed: {title}: {detail}");
}

fn stream(tag: u64) -> StreamRng {
    rng::stream(SUITE_SEED, Stream::Sweep, &[tag])
}

/// Connected random street graph with integer-second edge times, so sums
/// of edge times are exact in floating point.
fn random_city(r: &mut StreamRng, n: usize, extra_edges: usize, integer_times: bool) -> City {
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    let time = |r: &mut StreamRng| {
        if integer_times {
            r.gen_range(1..=40) as f64 * 15.0
        } else {
            r.gen_range(10.0..600.0)
        }
    };
    for v in 1..n {
        let u = r.gen_range(0..v);
        seen.insert((u, v));
        edges.push((u, v, time(r)));
    }
    for _ in 0..extra_edges {
        let a = r.gen_range(0..n);
        let b = r.gen_range(0..n);
        let key = (a.min(b), a.max(b));
        if a != b && seen.insert(key) {
            edges.push((key.0, key.1, time(r)));
        }
    }
    let pos = (0..n).map(|_| [r.gen_range(0.0..5000.0), r.gen_range(0.0..5000.0)]).collect();
    let mut demand = vec![1.0; n * n];
    for i in 0..n {
        demand[i * n + i] = 0.0;
    }
    City::new(pos, &edges, demand, false).unwrap()
}

/// Random simple street path starting anywhere, at least two stops.
fn random_route(r: &mut StreamRng, city: &City, max_len: usize) -> Vec<usize> {
    let mut route = vec![r.gen_range(0..city.len())];
    let target = r.gen_range(2..=max_len.max(2));
    while route.len() < target {
        let last = *route.last().unwrap();
        let options: Vec<usize> = city
            .neighbors(last)
            .iter()
            .map(|&(j, _)| j)
            .filter(|j| !route.contains(j))
            .collect();
        match options.choose(r) {
            Some(&j) => route.push(j),
            None => break,
        }
    }
    route
}

fn is_simple_street_path(city: &City, route: &[usize]) -> bool {
    let distinct: HashSet<usize> = route.iter().copied().collect();
    distinct.len() == route.len() && route.windows(2).all(|w| city.street_time(w[0], w[1]).is_some())
}

fn small_policy_config() -> PolicyConfig {
    PolicyConfig {
        layers: 2,
        heads: 4,
        embed_dim: 32,
        ff_dim: 64,
        head_hidden: 32,
        baseline_hidden: 32,
    }
}

fn fitted_policy(config: PolicyConfig, cities: &[City], params: NdpParams, seed: u64) -> PolicyParams {
    let stats = fit_normalization(cities, params, 5.0, 300.0, seed).unwrap();
    PolicyParams::init(config, seed).unwrap().with_norm_stats(stats)
}

fn synthetic_cities(count: usize, n_range: std::ops::RangeInclusive<usize>, tag: u64) -> Vec<City> {
    let mut r = stream(tag);
    (0..count)
        .map(|_| {
            let kind = CityKind::ALL[r.gen_range(0..4)];
            let n = r.gen_range(n_range.clone());
            generate_city(kind, n, 0.1, &mut r).unwrap()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Benchmark-dependent checks

fn benchmark_dir() -> PathBuf {
    default_benchmark_dir()
}

fn load(id: u8, title: &str, b: Benchmark) -> City {
    load_benchmark_files(&benchmark_dir(), b).unwrap_or_else(|e| {
        verdict(id, title, false, format!("{e}; set TNDP_BENCHMARK_DIR"));
        unreachable!()
    })
}

fn ea_costs(city: &City, params: NdpParams, mode: EaMode, policy: Option<&PolicyParams>, runs: usize) -> Vec<evo::EaOutcome> {
    (0..runs)
        .map(|i| {
            let config = EaConfig {
                alpha: 1.0,
                mode,
                seed: run_seed(0, i),
                ..EaConfig::default()
            };
            evo::run(city, params, &config, policy).unwrap()
        })
        .collect()
}

fn trained_policy(id: u8, title: &str) -> PolicyParams {
    match std::env::var_os(POLICY_ENV) {
        Some(p) => load_params(std::path::Path::new(&p)).unwrap(),
        None => {
            verdict(id, title, false, format!("no trained policy; set {POLICY_ENV}"));
            unreachable!()
        }
    }
}

#[test]
#[ignore = "needs benchmark files in TNDP_BENCHMARK_DIR"]
fn benchmark_parameters_match_published_table() {
    let published = [
        (Benchmark::Mandl, 15, 6, 2, 8),
        (Benchmark::Mumford0, 30, 12, 2, 15),
        (Benchmark::Mumford1, 70, 15, 10, 30),
        (Benchmark::Mumford2, 110, 56, 10, 22),
        (Benchmark::Mumford3, 127, 60, 12, 25),
    ];
    let mut bad = Vec::new();
    for (b, n, s, lo, hi) in published {
        let dir = benchmark_dir();
        match load_benchmark_files(&dir, b) {
            Ok(city) => {
                let p = b.params();
                if city.len() != n || (p.routes, p.min_len, p.max_len) != (s, lo, hi) {
                    bad.push(format!("{}: n={} S={} MIN={} MAX={}", b.name(), city.len(), p.routes, p.min_len, p.max_len));
                }
            }
            Err(e) => bad.push(format!("{}: {e}", b.name())),
        }
    }
    let detail = if bad.is_empty() { "all five cities".to_string() } else { bad.join("; ") };
    verdict(1, "benchmark ingestion reproduces n, S, MIN, MAX", bad.is_empty(), detail);
}

fn ea_mean_in(id: u8, b: Benchmark, lo: f64, hi: f64) {
    let title = format!("EA on {} at alpha 1 lands in [{lo}, {hi}]", b.name());
    let city = load(id, &title, b);
    let runs = ea_costs(&city, b.params(), EaMode::Ea, None, 10);
    let costs: Vec<f64> = runs.iter().map(|o| o.best.cost.total).collect();
    let (m, s) = mean_std(&costs);
    verdict(
        id,
        &title,
        (lo..=hi).contains(&m),
        format!("mean {m:.4} +- {s:.4} over 10 seeds"),
    );
}

#[test]
#[ignore = "needs benchmark files in TNDP_BENCHMARK_DIR"]
fn ea_on_mandl_matches_published_cost() {
    ea_mean_in(2, Benchmark::Mandl, 0.295, 0.345);
}

#[test]
#[ignore = "needs benchmark files in TNDP_BENCHMARK_DIR"]
fn ea_on_mumford0_matches_published_cost() {
    ea_mean_in(3, Benchmark::Mumford0, 0.60, 0.70);
}

#[test]
#[ignore = "needs benchmark files and a fully trained policy in TNDP_POLICY"]
fn nea_beats_ea_on_mumford1() {
    let title = "NEA below EA on Mumford1 and C_p near 24.95 min";
    let policy = trained_policy(4, title);
    let city = load(4, title, Benchmark::Mumford1);
    let params = Benchmark::Mumford1.params();
    let ea: Vec<f64> = ea_costs(&city, params, EaMode::Ea, None, 10).iter().map(|o| o.best.cost.total).collect();
    let nea = ea_costs(&city, params, EaMode::Nea, Some(&policy), 10);
    let nea_c: Vec<f64> = nea.iter().map(|o| o.best.cost.total).collect();
    let nea_cp: Vec<f64> = nea.iter().map(|o| o.best.cost.passenger / 60.0).collect();
    let (ea_m, _) = mean_std(&ea);
    let (nea_m, _) = mean_std(&nea_c);
    let (cp_m, cp_s) = mean_std(&nea_cp);
    verdict(
        4,
        title,
        nea_m < ea_m && (cp_m - 24.95).abs() <= 1.5,
        format!("NEA {nea_m:.4} vs EA {ea_m:.4}; NEA C_p {cp_m:.2} +- {cp_s:.2} min"),
    );
}

#[test]
#[ignore = "needs benchmark files and a fully trained policy in TNDP_POLICY"]
fn nea_at_least_as_good_as_lc100() {
    let title = "NEA at or below LC-100 on Mumford1-3";
    let policy = trained_policy(5, title);
    let mut ok = true;
    let mut detail = Vec::new();
    for b in [Benchmark::Mumford1, Benchmark::Mumford2, Benchmark::Mumford3] {
        let city = load(5, title, b);
        let params = b.params();
        let weights = CostWeights::with_defaults(&city, &params, 1.0);
        let lc: Vec<f64> = (0..10)
            .map(|i| learned_construction(&city, params, &policy, 100, &weights, run_seed(0, i)).unwrap().cost.total)
            .collect();
        let nea: Vec<f64> = ea_costs(&city, params, EaMode::Nea, Some(&policy), 10)
            .iter()
            .map(|o| o.best.cost.total)
            .collect();
        let (lc_m, nea_m) = (mean_std(&lc).0, mean_std(&nea).0);
        ok &= nea_m <= lc_m;
        detail.push(format!("{}: NEA {nea_m:.4} LC {lc_m:.4}", b.name()));
    }
    verdict(5, title, ok, detail.join("; "));
}

// ---------------------------------------------------------------------------
// Self-contained checks

/// Best (time, transfers) over every itinerary that visits each node at most
/// once: board anywhere on a route through the current node, ride in either
/// direction, alight, then optionally change to another route.
fn brute_force_trips(city: &City, routes: &[Vec<usize>], transfer_penalty: f64) -> Vec<(f64, u32)> {
    let n = city.len();
    let mut best = vec![(f64::INFINITY, u32::MAX); n * n];
    #[allow(clippy::too_many_arguments)]
    fn explore(
        city: &City,
        routes: &[Vec<usize>],
        p: f64,
        origin: usize,
        at: usize,
        prev: Option<usize>,
        time: f64,
        transfers: u32,
        visited: u32,
        best: &mut [(f64, u32)],
    ) {
        let n = city.len();
        for (ri, r) in routes.iter().enumerate() {
            if Some(ri) == prev {
                continue;
            }
            let Some(k) = r.iter().position(|&v| v == at) else { continue };
            let (t0, x0) = if prev.is_some() { (time + p, transfers + 1) } else { (time, transfers) };
            for dir in [-1isize, 1] {
                let (mut t, mut seen, mut idx) = (t0, visited, k as isize);
                loop {
                    let next = idx + dir;
                    if next < 0 || next as usize >= r.len() {
                        break;
                    }
                    let w = r[next as usize];
                    if seen & (1 << w) != 0 {
                        break;
                    }
                    t += city.street_time(r[idx as usize], w).unwrap();
                    seen |= 1 << w;
                    let slot = &mut best[origin * n + w];
                    if (t, x0) < *slot {
                        *slot = (t, x0);
                    }
                    explore(city, routes, p, origin, w, Some(ri), t, x0, seen, best);
                    idx = next;
                }
            }
        }
    }
    for o in 0..n {
        best[o * n + o] = (0.0, 0);
        explore(city, routes, transfer_penalty, o, o, None, 0.0, 0, 1 << o, &mut best);
    }
    best
}

#[test]
fn transit_assignment_matches_itinerary_enumeration() {
    let mut r = stream(6);
    let mut mismatches = 0;
    let mut pairs = 0;
    for _ in 0..200 {
        let n = r.gen_range(3..=8);
        let extra = r.gen_range(0..=n);
        let city = random_city(&mut r, n, extra, true);
        let s = r.gen_range(1..=3);
        let routes: Vec<Vec<usize>> = (0..s).map(|_| random_route(&mut r, &city, n)).collect();
        let p = [0.0, 300.0, r.gen_range(1..=20) as f64 * 30.0][r.gen_range(0..3)];
        let got = assign_transit_times(&city, &Network::new(routes.clone()), p).unwrap();
        let want = brute_force_trips(&city, &routes, p);
        for i in 0..n {
            for j in 0..n {
                pairs += 1;
                let (t, x) = want[i * n + j];
                let same = if t.is_finite() {
                    got.connected(i, j) && got.time(i, j) == t && got.transfers(i, j) == x
                } else {
                    !got.connected(i, j)
                };
                mismatches += usize::from(!same);
            }
        }
    }
    verdict(
        6,
        "transit assignment equals brute-force itineraries",
        mismatches == 0,
        format!("{mismatches} mismatches over {pairs} ordered pairs on 200 instances"),
    );
}

fn brute_force_shortest(city: &City) -> Vec<f64> {
    let n = city.len();
    let mut best = vec![f64::INFINITY; n * n];
    fn walk(city: &City, s: usize, at: usize, t: f64, seen: u32, best: &mut [f64]) {
        let n = city.len();
        if t < best[s * n + at] {
            best[s * n + at] = t;
        }
        for &(j, w) in city.neighbors(at) {
            if seen & (1 << j) == 0 {
                walk(city, s, j, t + w, seen | (1 << j), best);
            }
        }
    }
    for s in 0..n {
        walk(city, s, s, 0.0, 1 << s, &mut best);
    }
    best
}

#[test]
fn shortest_paths_match_simple_path_enumeration() {
    let mut r = stream(7);
    let mut worst: f64 = 0.0;
    let mut exact_misses = 0;
    let mut path_misses = 0;
    for g in 0..100 {
        let n = r.gen_range(2..=12);
        let integer = g % 2 == 0;
        let extra = r.gen_range(0..=n + 4);
        let city = random_city(&mut r, n, extra, integer);
        let want = brute_force_shortest(&city);
        for i in 0..n {
            for j in 0..n {
                let (got, exp) = (city.travel_time(i, j), want[i * n + j]);
                if integer {
                    exact_misses += usize::from(got != exp);
                } else {
                    worst = worst.max((got - exp).abs() / exp.max(1.0));
                }
                let path = city.paths().path(i, j);
                let along: f64 = path.windows(2).map(|w| city.street_time(w[0], w[1]).unwrap_or(f64::NAN)).sum();
                let ok = path.first() == Some(&i) && path.last() == Some(&j) && (along - exp).abs() <= 1e-9 * exp.max(1.0);
                path_misses += usize::from(!ok);
            }
        }
    }
    verdict(
        7,
        "shortest-path table equals exhaustive simple-path minimum",
        exact_misses == 0 && worst <= 1e-12 && path_misses == 0,
        format!("{exact_misses} exact mismatches, worst real-valued rel error {worst:.1e}, {path_misses} bad paths"),
    );
}

#[test]
fn mutators_preserve_route_structure() {
    let mut r = stream(8);
    let cities = synthetic_cities(12, 10..=25, 80);
    let policy_params = {
        let config = PolicyConfig {
            layers: 1,
            heads: 2,
            embed_dim: 8,
            ff_dim: 16,
            head_hidden: 8,
            baseline_hidden: 8,
        };
        fitted_policy(config, &cities[..4], NdpParams::new(4, 2, 8), 1)
    };
    let policy = NeuralPolicy::new(&policy_params);
    let (mut applied, mut broken, mut wrong_count) = (0usize, 0usize, 0usize);
    let mut per_kind = [0usize; 3];
    while applied < 10_000 {
        let city = &cities[r.gen_range(0..cities.len())];
        let n = city.len();
        let params = NdpParams::new(r.gen_range(2..=6), 2, r.gen_range(4..=n.min(12)));
        let weights = CostWeights::with_defaults(city, &params, 0.5);
        let mut net = rollout(city, &UniformPolicy, params, &weights, Selection::Sample, &mut r)
            .unwrap()
            .network;
        for _ in 0..50 {
            let pick = r.gen_range(0..20);
            net = match pick {
                0 => mutate_neural(&net, city, &policy, params, r.gen(), Selection::Sample, &mut r).unwrap(),
                1..=9 => mutate_type1(&net, city, &mut r),
                _ => mutate_type2(&net, city, r.gen_range(0.0..1.0), &mut r),
            };
            per_kind[match pick {
                0 => 0,
                1..=9 => 1,
                _ => 2,
            }] += 1;
            applied += 1;
            wrong_count += usize::from(net.len() != params.routes);
            broken += net.routes.iter().filter(|rt| !is_simple_street_path(city, rt)).count();
        }
    }
    verdict(
        8,
        "mutations keep S routes of simple street paths",
        broken == 0 && wrong_count == 0,
        format!(
            "{applied} applications (neural {}, type-1 {}, type-2 {}): {broken} bad routes, {wrong_count} wrong counts",
            per_kind[0], per_kind[1], per_kind[2]
        ),
    );
}

#[test]
fn cost_is_invariant_to_time_scale() {
    let mut r = stream(9);
    let cities = synthetic_cities(50, 8..=30, 90);
    let mut worst: f64 = 0.0;
    for city in &cities {
        let params = NdpParams::new(r.gen_range(2..=5), 2, city.len().min(10));
        let alpha: f64 = r.gen();
        let p_t = 300.0;
        let w = CostWeights::new(city, &params, alpha, 5.0, p_t);
        let net = rollout(city, &UniformPolicy, params, &w, Selection::Sample, &mut r).unwrap().network;
        let base = total_cost(city, &net, &params, &w).unwrap().total;
        let c_s = r.gen_range(0.1..10.0);
        let scaled = augment_with(
            city,
            Augmentation {
                space_scale: c_s,
                ..Augmentation::IDENTITY
            },
        );
        let ws = CostWeights::new(&scaled, &params, alpha, 5.0, p_t * c_s);
        let again = total_cost(&scaled, &net, &params, &ws).unwrap().total;
        worst = worst.max((again - base).abs() / base.abs().max(1e-300));
    }
    verdict(
        9,
        "total cost unchanged by uniform time scaling",
        worst <= 1e-9,
        format!("worst relative change {worst:.2e} over 50 cities"),
    );
}

fn relabel(state: &MdpState, perm: &[usize]) -> MdpState {
    let mut s = state.clone();
    s.finished = state.finished.iter().map(|rt| rt.iter().map(|&v| perm[v]).collect()).collect();
    s.current = state.current.iter().map(|&v| perm[v]).collect();
    s
}

#[test]
fn policy_is_equivariant_to_node_relabeling() {
    // Continuous edge times, so no two street paths tie and the candidate
    // sets themselves are label-independent.
    let mut r = stream(10);
    let cities: Vec<City> = (0..20)
        .map(|_| {
            let n = r.gen_range(6..=14);
            let extra = r.gen_range(n / 2..=n + 4);
            random_city(&mut r, n, extra, false)
        })
        .collect();
    let params = fitted_policy(small_policy_config(), &cities[..6], NdpParams::new(3, 2, 6), 2);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for city in &cities {
        let ndp = NdpParams::new(3, 2, city.len().min(6));
        let w = CostWeights::with_defaults(city, &ndp, r.gen());
        let ep = rollout(city, &UniformPolicy, ndp, &w, Selection::Sample, &mut r).unwrap();
        let choices: Vec<_> = ep.decisions.iter().filter(|d| d.n_candidates > 1).collect();
        let d = choices[r.gen_range(0..choices.len())];
        let mut perm: Vec<usize> = (0..city.len()).collect();
        perm.shuffle(&mut r);
        let pc = city.permuted(&perm).unwrap();
        let ps = relabel(&d.state, &perm);
        let policy = NeuralPolicy::new(&params);
        match d.kind {
            DecisionKind::Ext => {
                let cands = enumerate_extensions(&d.state, city);
                let pcands = enumerate_extensions(&ps, &pc);
                assert_eq!(cands.len(), pcands.len());
                let lp = policy.extension_log_probs(city, &d.state, &cands).unwrap();
                let plp = policy.extension_log_probs(&pc, &ps, &pcands).unwrap();
                for (cand, v) in cands.iter().zip(&lp) {
                    let mapped: Vec<usize> = cand.path.iter().map(|&x| perm[x]).collect();
                    // Starting paths are listed once per unordered pair, so
                    // relabeling may flip their orientation.
                    let reversed: Vec<usize> = mapped.iter().rev().copied().collect();
                    let fresh = d.state.current.is_empty();
                    let j = pcands
                        .iter()
                        .position(|p| (p.path == mapped || (fresh && p.path == reversed)) && p.end == cand.end)
                        .expect("candidate survives relabeling");
                    worst = worst.max((v.exp() - plp[j].exp()).abs());
                }
            }
            DecisionKind::Halt => {
                let (c, h) = policy.halt_log_probs(city, &d.state).unwrap();
                let (pc_, ph) = policy.halt_log_probs(&pc, &ps).unwrap();
                worst = worst.max((c.exp() - pc_.exp()).abs()).max((h.exp() - ph.exp()).abs());
            }
        }
        checked += 1;
    }
    verdict(
        10,
        "action distributions invariant under relabeling",
        worst <= 1e-6 && checked == 20,
        format!("worst probability gap {worst:.2e} over {checked} (city, state) pairs"),
    );
}

fn five_node_city() -> City {
    let pos = vec![[0.0, 0.0], [1100.0, 200.0], [1900.0, -300.0], [700.0, 1300.0], [2500.0, 1000.0]];
    let edges = [(0, 1, 64.0), (1, 2, 52.0), (1, 3, 80.0), (2, 4, 95.0), (3, 4, 117.0), (0, 3, 101.0)];
    let mut d = vec![0.0; 25];
    for i in 0..5 {
        for j in 0..5 {
            if i != j {
                d[i * 5 + j] = 50.0 + ((4 * (i + j) + i * j) % 7) as f64 * 45.0;
            }
        }
    }
    City::new(pos, &edges, d, false).unwrap()
}

#[test]
fn policy_gradients_match_finite_differences() {
    let city = five_node_city();
    let ndp = NdpParams::new(2, 2, 4);
    let config = PolicyConfig {
        layers: 2,
        heads: 2,
        embed_dim: 8,
        ff_dim: 16,
        head_hidden: 8,
        baseline_hidden: 8,
    };
    let params = fitted_policy(config, std::slice::from_ref(&city), ndp, 3);
    let weights = CostWeights::with_defaults(&city, &ndp, 0.6);
    let eps = 1e-5;
    let (mut worst, mut checked, mut kinds) = (0.0f64, 0usize, HashSet::new());
    for k in 0..3 {
        let mut r = stream(1100 + k);
        let (ep, grads) = episode_gradient(&params, &city, ndp, &weights, &mut r).unwrap();
        for d in ep.decisions.iter().filter(|d| d.n_candidates > 1) {
            kinds.insert(d.kind == DecisionKind::Ext);
        }
        for (ti, t) in params.policy.tensors.iter().enumerate() {
            for i in 0..t.data.len() {
                let mut plus = params.clone();
                plus.policy.tensors[ti].data[i] += eps;
                let mut minus = params.clone();
                minus.policy.tensors[ti].data[i] -= eps;
                let fd = (episode_log_prob(&plus, &city, &ep).unwrap() - episode_log_prob(&minus, &city, &ep).unwrap())
                    / (2.0 * eps);
                let an = grads[ti].data[i];
                worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
                checked += 1;
            }
        }
    }
    verdict(
        11,
        "log-policy gradients match central differences",
        worst < 1e-4 && kinds.len() == 2,
        format!("worst relative error {worst:.2e} over {checked} parameter checks, both decision kinds covered"),
    );
}

#[test]
fn smoke_training_improves_on_untrained_policy() {
    let config = TrainConfig {
        dataset_size: 4096,
        city_nodes: 10,
        epochs: 3,
        validate_initial: true,
        policy: small_policy_config(),
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let out = train::train(&config, None).unwrap();
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let before = out.initial_validation.as_ref().unwrap().mean;
    let after = out.history[out.best_epoch - 1].val_cost_mean;
    let gain = 1.0 - after / before;
    verdict(
        12,
        "3-epoch smoke training beats the untrained policy by 5%",
        gain >= 0.05 && minutes <= 30.0,
        format!("validation {before:.4} -> {after:.4} ({:.1}% better) in {minutes:.1} min", 100.0 * gain),
    );
}

#[test]
fn best_cost_never_increases() {
    let cities = synthetic_cities(4, 12..=18, 130);
    let params = NdpParams::new(4, 2, 8);
    let policy = fitted_policy(small_policy_config(), &cities, params, 4);
    let mut histories = 0;
    let mut rises = 0;
    let mut stage_rises = 0;
    for (c, city) in cities.iter().enumerate() {
        for mode in [EaMode::Ea, EaMode::Nea] {
            let config = EaConfig {
                iterations: if mode == EaMode::Ea { 60 } else { 12 },
                alpha: [0.0, 0.5, 1.0][c % 3],
                mode,
                seed: run_seed(13, c),
                ..EaConfig::default()
            };
            let p = (mode == EaMode::Nea).then_some(&policy);
            let out = evo::run(city, params, &config, p).unwrap();
            histories += 1;
            rises += out.history.windows(2).filter(|w| w[1].best_c > w[0].best_c).count();

            let mut pop = init_population(city, params, &config).unwrap();
            for it in 0..8 {
                let before: Vec<f64> = pop.iter().map(|i| i.cost.total).collect();
                mutation_stage(&mut pop, city, params, &config, p, it).unwrap();
                stage_rises += pop.iter().zip(&before).filter(|(i, &b)| i.cost.total > b).count();
                selection_stage(&mut pop, &mut rng::stream(config.seed, Stream::Selection, &[it as u64]));
            }
        }
    }
    verdict(
        13,
        "best-ever cost is monotone and mutation never worsens an individual",
        rises == 0 && stage_rises == 0,
        format!("{histories} histories: {rises} rises in best-ever cost, {stage_rises} worsened individuals"),
    );
}
