//! Benchmark fixtures shared by the criterion targets.

use tndp_core::city::generate_city;
use tndp_core::rng::{self, Stream};
use tndp_core::{City, CityKind};

/// Deterministic synthetic city of `n` nodes.
pub fn fixture_city(n: usize) -> City {
    let mut r = rng::stream(42, Stream::Dataset, &[n as u64]);
    generate_city(CityKind::Grid8, n, 0.1, &mut r).expect("fixture city generates")
}
