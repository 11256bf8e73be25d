//! Multi-seed, multi-α experiment sweeps and their summaries.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tndp_core::evo::{self, EaConfig, EaMode};
use tndp_core::rng::{self, Stream};
use tndp_core::{City, CostBreakdown, Error, NdpParams, PolicyParams, Result};

use crate::lc::learned_construction;
use crate::manifest::write_json;
use crate::pareto::{ParetoPoint, ParetoSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Best of `K` sampled policy rollouts.
    Lc,
    Ea,
    Nea,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lc => "lc",
            Method::Ea => "ea",
            Method::Nea => "nea",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lc" => Ok(Method::Lc),
            "ea" => Ok(Method::Ea),
            "nea" => Ok(Method::Nea),
            other => Err(Error::InvalidParams(format!("unknown method {other:?}"))),
        }
    }

    pub fn needs_policy(self) -> bool {
        self != Method::Ea
    }
}

/// Flat sweep configuration: evolutionary settings plus the sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub ea: EaConfig,
    /// Rollouts per learned-construction run.
    pub lc_rollouts: usize,
    /// Number of runs per (method, α) cell.
    pub seeds: usize,
    /// Explicit α values; if empty, `alpha_points` evenly spaced values on [0, 1].
    pub alphas: Vec<f64>,
    pub alpha_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ea: EaConfig::default(),
            lc_rollouts: 100,
            seeds: 10,
            alphas: Vec::new(),
            alpha_points: 11,
        }
    }
}

impl SweepConfig {
    pub fn alpha_grid(&self) -> Vec<f64> {
        if self.alphas.is_empty() {
            alpha_grid(self.alpha_points)
        } else {
            self.alphas.clone()
        }
    }
}

/// `points` evenly spaced values from 0 to 1 inclusive.
pub fn alpha_grid(points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![1.0],
        _ => (0..points).map(|k| k as f64 / (points - 1) as f64).collect(),
    }
}

/// Seed of run `index` under a sweep root seed. Methods share seeds, so EA
/// and NEA runs with the same index start from the same population.
pub fn run_seed(root: u64, index: usize) -> u64 {
    rng::derive_seed(root, &[Stream::Sweep as u64, index as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub alpha: f64,
    pub seed_index: usize,
    pub seed: u64,
    pub cost: Option<f64>,
    pub cp_minutes: Option<f64>,
    pub co_minutes: Option<f64>,
    pub cc: Option<f64>,
    pub error: Option<String>,
}

impl RunRecord {
    fn new(method: Method, alpha: f64, seed_index: usize, seed: u64, result: Result<CostBreakdown>) -> Self {
        let (c, error) = match result {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        };
        RunRecord {
            method,
            alpha,
            seed_index,
            seed,
            cost: c.map(|c| c.total),
            cp_minutes: c.map(|c| c.passenger / 60.0),
            co_minutes: c.map(|c| c.operator / 60.0),
            cc: c.map(|c| c.constraint),
            error,
        }
    }
}

/// One (method, α, seed) run; returns the final cost breakdown.
pub fn run_cell(
    city: &City,
    params: NdpParams,
    config: &SweepConfig,
    method: Method,
    alpha: f64,
    seed: u64,
    policy: Option<&PolicyParams>,
) -> Result<CostBreakdown> {
    let mut ea = config.ea.clone();
    ea.alpha = alpha;
    ea.seed = seed;
    match method {
        Method::Ea | Method::Nea => {
            ea.mode = if method == Method::Ea { EaMode::Ea } else { EaMode::Nea };
            let policy = if method == Method::Nea { policy } else { None };
            Ok(evo::run(city, params, &ea, policy)?.best.cost)
        }
        Method::Lc => {
            let policy = policy.ok_or_else(|| Error::InvalidParams("learned construction needs a policy".into()))?;
            let weights = ea.weights(city, &params);
            Ok(learned_construction(city, params, policy, config.lc_rollouts, &weights, seed)?.cost)
        }
    }
}

/// Runs every (method, α, seed) cell. Failures are recorded, not fatal.
/// With `cell_dir`, each record is also written to its own JSON file.
pub fn run_sweep(
    city: &City,
    params: NdpParams,
    config: &SweepConfig,
    methods: &[Method],
    root_seed: u64,
    policy: Option<&PolicyParams>,
    cell_dir: Option<&Path>,
) -> Vec<RunRecord> {
    let alphas = config.alpha_grid();
    let mut cells = Vec::new();
    for &m in methods {
        for &a in &alphas {
            for s in 0..config.seeds {
                cells.push((m, a, s));
            }
        }
    }
    cells
        .par_iter()
        .map(|&(m, a, s)| {
            let seed = run_seed(root_seed, s);
            let rec = RunRecord::new(m, a, s, seed, run_cell(city, params, config, m, a, seed, policy));
            if let Some(dir) = cell_dir {
                let path = dir.join(format!("{}_a{:.3}_s{}.json", m.name(), a, s));
                if let Err(e) = write_json(&path, &rec) {
                    log::warn!("could not write {}: {e}", path.display());
                }
            }
            rec
        })
        .collect()
}

/// Aggregate of one (method, α) table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub alpha: f64,
    pub runs: usize,
    pub failures: usize,
    /// Runs whose final network violates a constraint (`C_c > 0`).
    pub violating: usize,
    pub cost_mean: f64,
    pub cost_std: f64,
    pub cp_mean: f64,
    pub cp_std: f64,
    pub co_mean: f64,
    pub co_std: f64,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(records: &[RunRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<(Method, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|&(m, a)| m == r.method && a == r.alpha) {
            keys.push((r.method, r.alpha));
        }
    }
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.into_iter()
        .map(|(m, a)| {
            let cell: Vec<&RunRecord> = records.iter().filter(|r| r.method == m && r.alpha == a).collect();
            let ok: Vec<&RunRecord> = cell.iter().copied().filter(|r| r.cost.is_some()).collect();
            let col = |f: fn(&RunRecord) -> Option<f64>| mean_std(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            let (cost_mean, cost_std) = col(|r| r.cost);
            let (cp_mean, cp_std) = col(|r| r.cp_minutes);
            let (co_mean, co_std) = col(|r| r.co_minutes);
            CellSummary {
                method: m,
                alpha: a,
                runs: cell.len(),
                failures: cell.len() - ok.len(),
                violating: ok.iter().filter(|r| r.cc.unwrap_or(0.0) > 0.0).count(),
                cost_mean,
                cost_std,
                cp_mean,
                cp_std,
                co_mean,
                co_std,
            }
        })
        .collect()
}

/// Markdown table: one row per method, one column per α, cells `mean ± std`.
/// Cells with constraint-violating runs are marked with their count.
pub fn table_markdown(city_label: &str, summaries: &[CellSummary]) -> String {
    let mut alphas: Vec<f64> = summaries.iter().map(|s| s.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let mut methods: Vec<Method> = summaries.iter().map(|s| s.method).collect();
    methods.sort();
    methods.dedup();
    let mut out = format!("| {city_label} |");
    for a in &alphas {
        out += &format!(" α = {a} |");
    }
    out += "\n|---|";
    out += &"---|".repeat(alphas.len());
    out += "\n";
    for m in methods {
        out += &format!("| {} |", m.name().to_uppercase());
        for &a in &alphas {
            match summaries.iter().find(|s| s.method == m && s.alpha == a) {
                Some(s) if s.runs > s.failures => {
                    out += &format!(" {:.3} ± {:.3}", s.cost_mean, s.cost_std);
                    if s.violating > 0 {
                        out += &format!(" ⚠ {}/{} violate", s.violating, s.runs - s.failures);
                    }
                    if s.failures > 0 {
                        out += &format!(" ({} failed)", s.failures);
                    }
                    out += " |";
                }
                Some(s) => out += &format!(" failed ({}) |", s.failures),
                None => out += " – |",
            }
        }
        out += "\n";
    }
    out
}

/// Per-method (C_p, C_o) curves in α order, from successful runs only.
pub fn pareto_series(summaries: &[CellSummary]) -> Vec<ParetoSeries> {
    let mut methods: Vec<Method> = summaries.iter().map(|s| s.method).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|m| {
            let mut points: Vec<ParetoPoint> = summaries
                .iter()
                .filter(|s| s.method == m && s.runs > s.failures)
                .map(|s| ParetoPoint {
                    alpha: s.alpha,
                    cp_mean: s.cp_mean,
                    cp_std: s.cp_std,
                    co_mean: s.co_mean,
                    co_std: s.co_std,
                })
                .collect();
            points.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
            ParetoSeries {
                label: m.name().to_uppercase(),
                points,
            }
        })
        .collect()
}

pub fn write_records_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let err = |e: csv::Error| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in records {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let err = |e: csv::Error| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize().map(|x| x.map_err(err)).collect()
}
