//! Benchmark text matrices and the native JSON city format.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layout::stress_layout;
use super::{City, NdpParams, SYMMETRY_TOLERANCE};
use crate::error::{Error, Result};

/// The five standard benchmark cities and their published parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Benchmark {
    Mandl,
    Mumford0,
    Mumford1,
    Mumford2,
    Mumford3,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::Mandl,
        Benchmark::Mumford0,
        Benchmark::Mumford1,
        Benchmark::Mumford2,
        Benchmark::Mumford3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Mandl => "Mandl",
            Benchmark::Mumford0 => "Mumford0",
            Benchmark::Mumford1 => "Mumford1",
            Benchmark::Mumford2 => "Mumford2",
            Benchmark::Mumford3 => "Mumford3",
        }
    }

    /// Node count `n`.
    pub fn nodes(self) -> usize {
        match self {
            Benchmark::Mandl => 15,
            Benchmark::Mumford0 => 30,
            Benchmark::Mumford1 => 70,
            Benchmark::Mumford2 => 110,
            Benchmark::Mumford3 => 127,
        }
    }

    /// Published street edge count (informational; not enforced on load).
    pub fn street_edges(self) -> usize {
        match self {
            Benchmark::Mandl => 20,
            Benchmark::Mumford0 => 90,
            Benchmark::Mumford1 => 210,
            Benchmark::Mumford2 => 385,
            Benchmark::Mumford3 => 425,
        }
    }

    pub fn params(self) -> NdpParams {
        match self {
            Benchmark::Mandl => NdpParams::new(6, 2, 8),
            Benchmark::Mumford0 => NdpParams::new(12, 2, 15),
            Benchmark::Mumford1 => NdpParams::new(15, 10, 30),
            Benchmark::Mumford2 => NdpParams::new(56, 10, 22),
            Benchmark::Mumford3 => NdpParams::new(60, 12, 25),
        }
    }

    /// Locates `<Name>TravelTimes.txt` and `<Name>Demand.txt` in `dir`
    /// (file names matched case-insensitively, one level of subdirectories searched).
    pub fn locate(self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let want_tt = format!("{}traveltimes.txt", self.name().to_ascii_lowercase());
        let want_d = format!("{}demand.txt", self.name().to_ascii_lowercase());
        let mut candidates = vec![dir.to_path_buf()];
        if let Ok(rd) = fs::read_dir(dir) {
            let mut subdirs: Vec<PathBuf> = rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            subdirs.sort();
            candidates.extend(subdirs);
        }
        for d in candidates {
            let Ok(rd) = fs::read_dir(&d) else { continue };
            let mut tt = None;
            let mut dem = None;
            for entry in rd.filter_map(|e| e.ok()) {
                let name = entry.file_name().to_string_lossy().to_ascii_lowercase();
                if name == want_tt {
                    tt = Some(entry.path());
                } else if name == want_d {
                    dem = Some(entry.path());
                }
            }
            if let (Some(tt), Some(dem)) = (tt, dem) {
                return Ok((tt, dem));
            }
        }
        Err(Error::io(
            dir.join(format!("{}TravelTimes.txt", self.name())),
            std::io::Error::new(std::io::ErrorKind::NotFound, "benchmark files not found"),
        ))
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParams(format!("unknown benchmark {s:?}")))
    }
}

/// Parses a whitespace-separated square matrix. `Inf` (any case) parses as infinity.
pub fn parse_matrix(text: &str, context: &str) -> Result<(usize, Vec<f64>)> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|tok| {
                let lower = tok.to_ascii_lowercase();
                if lower == "inf" || lower == "+inf" || lower == "infinity" {
                    Ok(f64::INFINITY)
                } else {
                    tok.parse::<f64>().map_err(|e| Error::Parse {
                        context: format!("{context} line {}", lineno + 1),
                        message: format!("{tok:?}: {e}"),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidMatrix(format!("{context}: empty matrix")));
    }
    if let Some((r, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::InvalidMatrix(format!(
            "{context}: row {} has {} entries, expected {n} (matrix must be square)",
            r + 1,
            row.len()
        )));
    }
    Ok((n, rows.into_iter().flatten().collect()))
}

fn check_symmetric(n: usize, m: &[f64], context: &str) -> Result<()> {
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (m[i * n + j], m[j * n + i]);
            let same = if a.is_infinite() || b.is_infinite() {
                a == b
            } else {
                (a - b).abs() <= SYMMETRY_TOLERANCE * a.abs().max(b.abs()).max(1.0)
            };
            if !same {
                return Err(Error::InvalidMatrix(format!(
                    "{context}: asymmetric entries at ({i}, {j}): {a} vs {b}"
                )));
            }
        }
    }
    Ok(())
}

/// Builds a city from benchmark travel-time (minutes, `Inf` = no street)
/// and demand (trips) matrices.
///
/// Positions are synthesized by a deterministic layout and flagged as such;
/// they feed only the policy features.
pub fn load_benchmark(travel_times: &str, demand: &str, params: NdpParams) -> Result<City> {
    let (n, tt) = parse_matrix(travel_times, "travel times")?;
    let (nd, dem) = parse_matrix(demand, "demand")?;
    if n != nd {
        return Err(Error::InvalidMatrix(format!(
            "travel-time matrix is {n}x{n} but demand is {nd}x{nd}"
        )));
    }
    for (k, &v) in tt.iter().enumerate() {
        if v < 0.0 || v.is_nan() {
            return Err(Error::InvalidMatrix(format!(
                "travel times: negative entry {v} at ({}, {})",
                k / n,
                k % n
            )));
        }
    }
    for (k, &v) in dem.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidMatrix(format!(
                "demand: invalid entry {v} at ({}, {})",
                k / n,
                k % n
            )));
        }
    }
    check_symmetric(n, &tt, "travel times")?;
    check_symmetric(n, &dem, "demand")?;
    params.validate(n)?;

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let minutes = tt[i * n + j];
            if minutes.is_finite() {
                if minutes <= 0.0 {
                    return Err(Error::InvalidMatrix(format!(
                        "travel times: street ({i}, {j}) has zero time"
                    )));
                }
                edges.push((i, j, minutes * 60.0));
            }
        }
    }
    let mut demand = dem;
    for i in 0..n {
        if demand[i * n + i] != 0.0 {
            return Err(Error::InvalidMatrix(format!("demand: nonzero diagonal at {i}")));
        }
        for j in (i + 1)..n {
            // mirror to remove sub-tolerance asymmetry
            demand[j * n + i] = demand[i * n + j];
        }
    }
    // positions need a connected graph first; build once without them, then lay out
    let placeholder = vec![[0.0, 0.0]; n];
    let city = City::new(placeholder, &edges, demand.clone(), true)?;
    let positions = stress_layout(n, city.paths().times());
    City::new(positions, &edges, demand, true)
}

/// Loads a benchmark from a data directory using its published parameters.
pub fn load_benchmark_files(dir: &Path, bench: Benchmark) -> Result<City> {
    let (tt_path, d_path) = bench.locate(dir)?;
    let tt = fs::read_to_string(&tt_path).map_err(|e| Error::io(&tt_path, e))?;
    let d = fs::read_to_string(&d_path).map_err(|e| Error::io(&d_path, e))?;
    load_benchmark(&tt, &d, bench.params())
}

/// Native single-document city format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityFile {
    pub nodes: Vec<[f64; 2]>,
    pub edges: Vec<(usize, usize, f64)>,
    pub demand: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<NdpParams>,
}

impl CityFile {
    pub fn from_city(city: &City, params: Option<NdpParams>) -> Self {
        let n = city.len();
        CityFile {
            nodes: city.positions().to_vec(),
            edges: city.edges().iter().map(|e| (e.i, e.j, e.time)).collect(),
            demand: (0..n)
                .map(|i| (0..n).map(|j| city.demand(i, j)).collect())
                .collect(),
            params,
        }
    }

    pub fn to_city(&self) -> Result<City> {
        let n = self.nodes.len();
        if self.demand.len() != n || self.demand.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMatrix(format!("demand must be {n}x{n}")));
        }
        let city = City::new(
            self.nodes.clone(),
            &self.edges,
            self.demand.iter().flatten().copied().collect(),
            false,
        )?;
        if let Some(p) = self.params {
            p.validate(n)?;
        }
        Ok(city)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("city serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
