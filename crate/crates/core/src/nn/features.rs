//! State featurization and input standardization.
//!
//! Node features: `x, y, outgoing demand, street degree, on current route,
//! is a current terminal`. Edge features for every ordered pair:
//! `demand, shortest drive time, street drive time (0 if none), has street
//! edge, shares a route, consecutive on current route`. Global features:
//! `α, finished / S, |current| / MAX`.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::city::{City, NdpParams};
use crate::error::{Error, Result};
use crate::mdp::MdpState;

pub const NODE_FEATURES: usize = 6;
pub const EDGE_FEATURES: usize = 6;
pub const GLOBAL_FEATURES: usize = 3;
/// `n, mean demand, max demand, mean T, max T, S, MIN, MAX`.
pub const DESCRIPTOR_FEATURES: usize = 8;
pub const FEATURE_LAYOUT_VERSION: u32 = 1;
/// Features whose spread is below this (relative to their magnitude) in the
/// fitting sample are only centred, not scaled.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Moments {
    fn standardize(&self, t: &mut Tensor) {
        debug_assert_eq!(t.cols, self.mean.len());
        for row in t.data.chunks_mut(t.cols) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }

    pub fn standardize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Per-feature standardization statistics, frozen after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub node: Moments,
    pub edge: Moments,
    pub global: Moments,
    pub descriptor: Moments,
}

impl NormStats {
    /// Mean 0, std 1 everywhere.
    pub fn identity() -> Self {
        let m = |k: usize| Moments {
            mean: vec![0.0; k],
            std: vec![1.0; k],
        };
        NormStats {
            node: m(NODE_FEATURES),
            edge: m(EDGE_FEATURES),
            global: m(GLOBAL_FEATURES),
            descriptor: m(DESCRIPTOR_FEATURES),
        }
    }
}

/// Streaming mean/variance of fixed-width rows (Welford updates).
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(width: usize) -> Self {
        MomentAccumulator {
            count: 0.0,
            mean: vec![0.0; width],
            m2: vec![0.0; width],
        }
    }

    pub fn rows(&self) -> usize {
        self.count as usize
    }

    pub fn add_row(&mut self, row: &[f64]) {
        self.count += 1.0;
        for ((m, q), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(row) {
            let d = v - *m;
            *m += d / self.count;
            *q += d * (v - *m);
        }
    }

    pub fn add_rows(&mut self, t: &Tensor) {
        for r in 0..t.rows {
            self.add_row(t.row(r));
        }
    }

    /// Population moments. A (near-)constant feature gets std 1, so values
    /// unseen during fitting stay on their natural scale instead of blowing up.
    pub fn finish(&self) -> Moments {
        let n = self.count.max(1.0);
        let std = self
            .m2
            .iter()
            .zip(&self.mean)
            .map(|(q, m)| {
                let s = (q / n).max(0.0).sqrt();
                if s <= STD_FLOOR * m.abs().max(1.0) {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Moments {
            mean: self.mean.clone(),
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateFeatures {
    /// `n × NODE_FEATURES`
    pub node: Tensor,
    /// `n² × EDGE_FEATURES`, row `i·n + j` describes the pair `(i, j)`.
    pub edge: Tensor,
    /// `1 × GLOBAL_FEATURES`
    pub global: Tensor,
}

/// Features before standardization.
pub fn raw_features(city: &City, state: &MdpState, alpha: f64) -> StateFeatures {
    let n = city.len();
    let current = &state.current;
    let mut on_current = vec![false; n];
    for &v in current {
        on_current[v] = true;
    }
    let mut terminal = vec![false; n];
    if let (Some(&a), Some(&b)) = (current.first(), current.last()) {
        terminal[a] = true;
        terminal[b] = true;
    }

    let mut node = Tensor::zeros(n, NODE_FEATURES);
    for i in 0..n {
        let [x, y] = city.positions()[i];
        let out_demand: f64 = (0..n).map(|j| city.demand(i, j)).sum();
        node.data[i * NODE_FEATURES..(i + 1) * NODE_FEATURES].copy_from_slice(&[
            x,
            y,
            out_demand,
            city.degree(i) as f64,
            on_current[i] as u8 as f64,
            terminal[i] as u8 as f64,
        ]);
    }

    let mut shares = vec![false; n * n];
    for route in state.finished.iter().chain(std::iter::once(current)) {
        for (a, &u) in route.iter().enumerate() {
            for &v in &route[a + 1..] {
                shares[u * n + v] = true;
                shares[v * n + u] = true;
            }
        }
    }
    let mut consecutive = vec![false; n * n];
    for w in current.windows(2) {
        consecutive[w[0] * n + w[1]] = true;
        consecutive[w[1] * n + w[0]] = true;
    }

    let mut edge = Tensor::zeros(n * n, EDGE_FEATURES);
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            let street = city.street_time(i, j);
            edge.data[k * EDGE_FEATURES..(k + 1) * EDGE_FEATURES].copy_from_slice(&[
                city.demand(i, j),
                city.travel_time(i, j),
                street.unwrap_or(0.0),
                street.is_some() as u8 as f64,
                shares[k] as u8 as f64,
                consecutive[k] as u8 as f64,
            ]);
        }
    }

    let params = &state.params;
    let global = Tensor::row_vector(vec![
        alpha,
        state.finished.len() as f64 / params.routes as f64,
        current.len() as f64 / params.max_len as f64,
    ]);
    StateFeatures { node, edge, global }
}

/// Standardized features for the policy.
pub fn compute_features(
    city: &City,
    state: &MdpState,
    alpha: f64,
    stats: Option<&NormStats>,
) -> Result<StateFeatures> {
    let stats = stats.ok_or(Error::MissingNormStats)?;
    let mut f = raw_features(city, state, alpha);
    stats.node.standardize(&mut f.node);
    stats.edge.standardize(&mut f.edge);
    stats.global.standardize(&mut f.global);
    Ok(f)
}

/// Fixed-length city summary for the baseline, before standardization.
pub fn city_descriptor(city: &City, params: &NdpParams) -> [f64; DESCRIPTOR_FEATURES] {
    let n = city.len();
    let pairs = (n * n - n).max(1) as f64;
    let mut mean_d = 0.0;
    let mut max_d = 0.0f64;
    let mut mean_t = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                mean_d += city.demand(i, j);
                max_d = max_d.max(city.demand(i, j));
                mean_t += city.travel_time(i, j);
            }
        }
    }
    [
        n as f64,
        mean_d / pairs,
        max_d,
        mean_t / pairs,
        city.max_travel_time(),
        params.routes as f64,
        params.min_len as f64,
        params.max_len as f64,
    ]
}

/// Standardized descriptor with `α` appended, as a `1×(DESCRIPTOR_FEATURES + 1)` row.
pub fn baseline_input(city: &City, params: &NdpParams, alpha: f64, stats: &NormStats) -> Tensor {
    let mut row = stats.descriptor.standardize_row(&city_descriptor(city, params));
    row.push(alpha);
    Tensor::row_vector(row)
}
