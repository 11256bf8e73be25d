//! Experiment harness around `tndp-core`: city loading, run manifests,
//! learned construction, sweeps, reports and plots.

pub mod city_source;
pub mod config;
pub mod lc;
pub mod manifest;
pub mod pareto;
pub mod report;
pub mod sweep;
