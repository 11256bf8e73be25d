#![allow(dead_code)]

use tndp_core::nn::NormStats;
use tndp_core::{City, NdpParams, Network, PolicyConfig, PolicyParams};

/// 3x3 street grid, one minute per block, unit demand everywhere.
pub fn grid3() -> City {
    let mut pos = Vec::new();
    for r in 0..3 {
        for c in 0..3 {
            pos.push([c as f64 * 500.0, r as f64 * 500.0]);
        }
    }
    let mut edges = Vec::new();
    for r in 0..3 {
        for c in 0..3 {
            let i = r * 3 + c;
            if c < 2 {
                edges.push((i, i + 1, 60.0));
            }
            if r < 2 {
                edges.push((i, i + 3, 60.0));
            }
        }
    }
    let mut demand = vec![1.0; 81];
    for i in 0..9 {
        demand[i * 9 + i] = 0.0;
    }
    City::new(pos, &edges, demand, false).unwrap()
}

pub fn grid3_params() -> NdpParams {
    NdpParams::new(3, 2, 5)
}

pub fn grid3_valid_network() -> Network {
    Network::new(vec![vec![0, 1, 2, 5, 8], vec![6, 7, 4, 3], vec![4, 1]])
}

pub fn tiny_policy() -> PolicyParams {
    let config = PolicyConfig {
        layers: 1,
        heads: 2,
        embed_dim: 8,
        ff_dim: 16,
        head_hidden: 8,
        baseline_hidden: 8,
    };
    PolicyParams::init(config, 3).unwrap().with_norm_stats(NormStats::identity())
}
