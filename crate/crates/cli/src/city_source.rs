//! Resolving `--city` arguments: a benchmark name or a city JSON file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use tndp_core::city::{load_benchmark_files, CityFile};
use tndp_core::{Benchmark, City, Error, NdpParams, Result};

pub const BENCHMARK_DIR_ENV: &str = "TNDP_BENCHMARK_DIR";

#[derive(Debug, Clone, PartialEq)]
pub enum CitySource {
    Benchmark(Benchmark),
    File(PathBuf),
}

impl CitySource {
    pub fn parse(arg: &str) -> Self {
        match Benchmark::from_str(arg) {
            Ok(b) => CitySource::Benchmark(b),
            Err(_) => CitySource::File(PathBuf::from(arg)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            CitySource::Benchmark(b) => b.name().to_string(),
            CitySource::File(p) => p.display().to_string(),
        }
    }

    /// The city and its route parameters, if the source defines them.
    pub fn load(&self, benchmark_dir: &Path) -> Result<(City, Option<NdpParams>)> {
        match self {
            CitySource::Benchmark(b) => Ok((load_benchmark_files(benchmark_dir, *b)?, Some(b.params()))),
            CitySource::File(p) => {
                let f = CityFile::read(p)?;
                Ok((f.to_city()?, f.params))
            }
        }
    }
}

/// `$TNDP_BENCHMARK_DIR`, falling back to `data/benchmarks`.
pub fn default_benchmark_dir() -> PathBuf {
    std::env::var_os(BENCHMARK_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/benchmarks"))
}

/// Route parameters from explicit overrides, else from the source.
pub fn resolve_params(
    from_source: Option<NdpParams>,
    routes: Option<usize>,
    min_len: Option<usize>,
    max_len: Option<usize>,
) -> Result<NdpParams> {
    match (from_source, routes, min_len, max_len) {
        (_, Some(s), Some(lo), Some(hi)) => Ok(NdpParams::new(s, lo, hi)),
        (Some(p), s, lo, hi) => Ok(NdpParams::new(
            s.unwrap_or(p.routes),
            lo.unwrap_or(p.min_len),
            hi.unwrap_or(p.max_len),
        )),
        _ => Err(Error::InvalidParams(
            "route parameters unknown for this city; pass --routes, --min-len and --max-len".into(),
        )),
    }
}
