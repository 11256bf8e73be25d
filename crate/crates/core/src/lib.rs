//! Transit network design toolkit.
//!
//! A city is a street graph with a symmetric demand matrix; a network is a
//! set of bus routes over it. The crate provides the cost model, a
//! route-by-route construction process, a graph-attention construction
//! policy trained with REINFORCE, and an evolutionary improvement loop that
//! can use the learned policy as a mutation operator.

pub mod city;
pub mod cost;
pub mod error;
pub mod evo;
pub mod mdp;
pub mod network;
pub mod nn;
pub mod rng;
pub mod train;

pub use city::{Benchmark, City, CityKind, NdpParams};
pub use cost::{CostBreakdown, CostWeights, TransitAssignment};
pub use error::{Error, Result};
pub use evo::{EaConfig, EaMode, EaOutcome, Individual};
pub use mdp::{ConstructionPolicy, Episode, MdpState, Selection};
pub use network::{Network, Route};
pub use nn::{NeuralPolicy, PolicyConfig, PolicyParams};
pub use train::{TrainConfig, TrainOutcome};
