//! Checkpoint files.
//!
//! A checkpoint is one JSON object:
//!
//! ```text
//! {
//!   "format": "tndp-policy",
//!   "version": 1,
//!   "feature_layout": 1,
//!   "config": { "layers": 3, "heads": 4, ... },
//!   "norm_stats": { "node": {"mean": [...], "std": [...]}, "edge": ..., "global": ..., "descriptor": ... },
//!   "policy":   [ {"name": "input.w", "rows": 6, "cols": 64, "data": [...]}, ... ],
//!   "baseline": [ ... ]
//! }
//! ```
//!
//! Tensors are row-major. Floats round-trip exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{NormStats, FEATURE_LAYOUT_VERSION};
use super::model::{ParamStore, PolicyConfig, PolicyParams};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "tndp-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    feature_layout: u32,
    config: PolicyConfig,
    norm_stats: Option<NormStats>,
    policy: Vec<NamedTensor>,
    baseline: Vec<NamedTensor>,
}

fn to_named(store: &ParamStore) -> Vec<NamedTensor> {
    store
        .names
        .iter()
        .zip(&store.tensors)
        .map(|(n, t)| NamedTensor {
            name: n.clone(),
            rows: t.rows,
            cols: t.cols,
            data: t.data.clone(),
        })
        .collect()
}

fn from_named(tensors: Vec<NamedTensor>) -> Result<ParamStore> {
    let mut store = ParamStore::default();
    for t in tensors {
        if t.data.len() != t.rows * t.cols {
            return Err(Error::Checkpoint(format!("tensor {} has wrong element count", t.name)));
        }
        store.names.push(t.name);
        store.tensors.push(Tensor::from_vec(t.rows, t.cols, t.data));
    }
    Ok(store)
}

pub fn params_to_json(params: &PolicyParams) -> String {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        feature_layout: FEATURE_LAYOUT_VERSION,
        config: params.config,
        norm_stats: params.norm_stats.clone(),
        policy: to_named(&params.policy),
        baseline: to_named(&params.baseline),
    };
    serde_json::to_string(&file).expect("checkpoint serializes")
}

pub fn params_from_json(text: &str) -> Result<PolicyParams> {
    let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unknown format {:?}", file.format)));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: file.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if file.feature_layout != FEATURE_LAYOUT_VERSION {
        return Err(Error::VersionMismatch {
            found: file.feature_layout,
            expected: FEATURE_LAYOUT_VERSION,
        });
    }
    PolicyParams::from_parts(
        file.config,
        file.norm_stats,
        from_named(file.policy)?,
        from_named(file.baseline)?,
    )
}

pub fn save_params(params: &PolicyParams, path: &Path) -> Result<()> {
    std::fs::write(path, params_to_json(params)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<PolicyParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    params_from_json(&text)
}
