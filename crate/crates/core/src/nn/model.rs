//! Parameter layout and forward passes of the construction policy and the
//! return baseline.
//!
//! Backbone: a stack of pre-norm attention layers over the complete graph on
//! the city's nodes. Each head adds a projection of the edge features to its
//! attention logits and mixes an attention-weighted sum of edge features into
//! its output, so the stack sees demand and travel times between every pair.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{DESCRIPTOR_FEATURES, EDGE_FEATURES, GLOBAL_FEATURES, NODE_FEATURES};
use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub layers: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub ff_dim: usize,
    pub head_hidden: usize,
    pub baseline_hidden: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            layers: 3,
            heads: 4,
            embed_dim: 64,
            ff_dim: 256,
            head_hidden: 64,
            baseline_hidden: 64,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.heads, self.embed_dim, self.ff_dim, self.head_hidden, self.baseline_hidden];
        if dims.contains(&0) {
            return Err(Error::InvalidParams("policy dimensions must be positive".into()));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::InvalidParams(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        Ok(())
    }

    fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }
}

/// Named tensors in a fixed order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ParamStore {
    fn add(&mut self, name: String, t: Tensor) -> usize {
        self.names.push(name);
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.tensors.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

#[derive(Debug, Clone)]
struct LayerIdx {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    w_edge_bias: usize,
    w_edge_msg: usize,
    wo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
struct PolicyLayout {
    w_in: usize,
    b_in: usize,
    layers: Vec<LayerIdx>,
    lnf_g: usize,
    lnf_b: usize,
    ext_mean: usize,
    ext_term: usize,
    ext_shape: usize,
    ext_global: usize,
    ext_b1: usize,
    ext_out: usize,
    halt_w1: usize,
    halt_b1: usize,
    halt_w2: usize,
    halt_b2: usize,
}

#[derive(Debug, Clone)]
struct BaselineLayout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
}

/// Glorot-uniform matrix, or zeros/ones for biases and gains.
enum Init {
    Glorot,
    Zeros,
    Ones,
}

fn build_policy<F: FnMut(&str, usize, usize, Init) -> usize>(cfg: &PolicyConfig, mut add: F) -> PolicyLayout {
    let d = cfg.embed_dim;
    let h = cfg.head_hidden;
    let w_in = add("input.w", NODE_FEATURES, d, Init::Glorot);
    let b_in = add("input.b", 1, d, Init::Zeros);
    let layers = (0..cfg.layers)
        .map(|l| {
            let p = |s: &str| format!("layer{l}.{s}");
            LayerIdx {
                ln1_g: add(&p("ln1.g"), 1, d, Init::Ones),
                ln1_b: add(&p("ln1.b"), 1, d, Init::Zeros),
                wq: add(&p("wq"), d, d, Init::Glorot),
                wk: add(&p("wk"), d, d, Init::Glorot),
                wv: add(&p("wv"), d, d, Init::Glorot),
                w_edge_bias: add(&p("edge_bias"), EDGE_FEATURES, cfg.heads, Init::Glorot),
                w_edge_msg: add(&p("edge_msg"), EDGE_FEATURES * cfg.heads, d, Init::Glorot),
                wo: add(&p("wo"), d, d, Init::Glorot),
                ln2_g: add(&p("ln2.g"), 1, d, Init::Ones),
                ln2_b: add(&p("ln2.b"), 1, d, Init::Zeros),
                w1: add(&p("ff.w1"), d, cfg.ff_dim, Init::Glorot),
                b1: add(&p("ff.b1"), 1, cfg.ff_dim, Init::Zeros),
                w2: add(&p("ff.w2"), cfg.ff_dim, d, Init::Glorot),
                b2: add(&p("ff.b2"), 1, d, Init::Zeros),
            }
        })
        .collect();
    PolicyLayout {
        w_in,
        b_in,
        layers,
        lnf_g: add("final_ln.g", 1, d, Init::Ones),
        lnf_b: add("final_ln.b", 1, d, Init::Zeros),
        ext_mean: add("ext.w_mean", d, h, Init::Glorot),
        ext_term: add("ext.w_terminal", d, h, Init::Glorot),
        ext_shape: add("ext.w_shape", 2, h, Init::Glorot),
        ext_global: add("ext.w_global", GLOBAL_FEATURES, h, Init::Glorot),
        ext_b1: add("ext.b1", 1, h, Init::Zeros),
        ext_out: add("ext.w_out", 1, h, Init::Glorot),
        halt_w1: add("halt.w1", d + GLOBAL_FEATURES, h, Init::Glorot),
        halt_b1: add("halt.b1", 1, h, Init::Zeros),
        halt_w2: add("halt.w2", h, 1, Init::Glorot),
        halt_b2: add("halt.b2", 1, 1, Init::Zeros),
    }
}

fn build_baseline<F: FnMut(&str, usize, usize, Init) -> usize>(cfg: &PolicyConfig, mut add: F) -> BaselineLayout {
    let h = cfg.baseline_hidden;
    BaselineLayout {
        w1: add("baseline.w1", DESCRIPTOR_FEATURES + 1, h, Init::Glorot),
        b1: add("baseline.b1", 1, h, Init::Zeros),
        w2: add("baseline.w2", h, h, Init::Glorot),
        b2: add("baseline.b2", 1, h, Init::Zeros),
        w3: add("baseline.w3", h, 1, Init::Glorot),
        b3: add("baseline.b3", 1, 1, Init::Zeros),
    }
}

fn init_tensor<R: Rng>(rows: usize, cols: usize, init: Init, rng: &mut R) -> Tensor {
    match init {
        Init::Zeros => Tensor::zeros(rows, cols),
        Init::Ones => Tensor::filled(rows, cols, 1.0),
        Init::Glorot => {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect())
        }
    }
}

/// Rebuilds the expected (name, shape) list and checks `store` against it.
fn check_store<L>(
    store: &ParamStore,
    build: impl FnOnce(&mut dyn FnMut(&str, usize, usize, Init) -> usize) -> L,
) -> Result<L> {
    let mut expected = Vec::new();
    let layout = build(&mut |name: &str, r: usize, c: usize, _| {
        expected.push((name.to_string(), r, c));
        expected.len() - 1
    });
    if expected.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            expected.len(),
            store.len()
        )));
    }
    for ((name, r, c), (n, t)) in expected.iter().zip(store.names.iter().zip(&store.tensors)) {
        if name != n || (*r, *c) != t.shape() || t.data.len() != r * c {
            return Err(Error::Checkpoint(format!(
                "tensor {n} {:?} does not match expected {name} ({r}, {c})",
                t.shape()
            )));
        }
    }
    Ok(layout)
}

/// Everything a trained policy needs at inference time.
#[derive(Debug, Clone)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    pub norm_stats: Option<super::features::NormStats>,
    pub policy: ParamStore,
    pub baseline: ParamStore,
    layout: PolicyLayout,
    baseline_layout: BaselineLayout,
}

impl PartialEq for PolicyParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.norm_stats == other.norm_stats
            && self.policy == other.policy
            && self.baseline == other.baseline
    }
}

impl PolicyParams {
    /// Random initialization from the parameter-init stream of `seed`.
    pub fn init(config: PolicyConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, Stream::ParamInit, &[]);
        let mut policy = ParamStore::default();
        let layout = build_policy(&config, |name, rows, cols, init| {
            policy.add(name.to_string(), init_tensor(rows, cols, init, &mut r))
        });
        let mut baseline = ParamStore::default();
        let baseline_layout = build_baseline(&config, |name, rows, cols, init| {
            baseline.add(name.to_string(), init_tensor(rows, cols, init, &mut r))
        });
        Ok(PolicyParams {
            config,
            norm_stats: None,
            policy,
            baseline,
            layout,
            baseline_layout,
        })
    }

    /// Reassembles parameters read from storage, validating names and shapes.
    pub fn from_parts(
        config: PolicyConfig,
        norm_stats: Option<super::features::NormStats>,
        policy: ParamStore,
        baseline: ParamStore,
    ) -> Result<Self> {
        config.validate()?;
        let layout = check_store(&policy, |add| build_policy(&config, add))?;
        let baseline_layout = check_store(&baseline, |add| build_baseline(&config, add))?;
        Ok(PolicyParams {
            config,
            norm_stats,
            policy,
            baseline,
            layout,
            baseline_layout,
        })
    }

    pub fn with_norm_stats(mut self, stats: super::features::NormStats) -> Self {
        self.norm_stats = Some(stats);
        self
    }

    /// Sets every policy tensor to zero (layer-norm gains included).
    pub fn zero_policy(&mut self) {
        for t in &mut self.policy.tensors {
            t.scale(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.policy.is_finite() && self.baseline.is_finite()
    }

    fn p<'a>(&'a self, g: &mut Graph<'a>, i: usize) -> Var {
        g.param(i, &self.policy.tensors[i])
    }

    fn b<'a>(&'a self, g: &mut Graph<'a>, i: usize) -> Var {
        g.param(i, &self.baseline.tensors[i])
    }

    /// Node embeddings `n×d` from standardized node features `n×6` and edge features `n²×6`.
    pub fn backbone<'a>(&'a self, g: &mut Graph<'a>, node: Var, edge: Var) -> Var {
        let cfg = &self.config;
        let lay = &self.layout;
        let dh = cfg.head_dim();
        let inv_sqrt = 1.0 / (dh as f64).sqrt();

        let w_in = self.p(g, lay.w_in);
        let b_in = self.p(g, lay.b_in);
        let h = g.matmul(node, w_in);
        let mut x = g.add_row(h, b_in);

        for l in &lay.layers {
            let (gam, bet) = (self.p(g, l.ln1_g), self.p(g, l.ln1_b));
            let xn = g.layer_norm(x, gam, bet);
            let (wq, wk, wv) = (self.p(g, l.wq), self.p(g, l.wk), self.p(g, l.wv));
            let q = g.matmul(xn, wq);
            let k = g.matmul(xn, wk);
            let v = g.matmul(xn, wv);
            let web = self.p(g, l.w_edge_bias);
            let bias = g.matmul(edge, web);

            let mut head_out = Vec::with_capacity(cfg.heads);
            let mut head_msg = Vec::with_capacity(cfg.heads);
            for hd in 0..cfg.heads {
                let qh = g.slice_cols(q, hd * dh, dh);
                let kh = g.slice_cols(k, hd * dh, dh);
                let vh = g.slice_cols(v, hd * dh, dh);
                let s = g.matmul_bt(qh, kh);
                let s = g.scale(s, inv_sqrt);
                let bh = g.column_to_square(bias, hd);
                let s = g.add(s, bh);
                let a = g.softmax_rows(s);
                head_out.push(g.matmul(a, vh));
                head_msg.push(g.edge_weighted_sum(a, edge));
            }
            let heads = g.concat_cols(&head_out);
            let msgs = g.concat_cols(&head_msg);
            let wo = self.p(g, l.wo);
            let wm = self.p(g, l.w_edge_msg);
            let o = g.matmul(heads, wo);
            let m = g.matmul(msgs, wm);
            let o = g.add(o, m);
            x = g.add(x, o);

            let (gam, bet) = (self.p(g, l.ln2_g), self.p(g, l.ln2_b));
            let xn = g.layer_norm(x, gam, bet);
            let (w1, b1, w2, b2) = (self.p(g, l.w1), self.p(g, l.b1), self.p(g, l.w2), self.p(g, l.b2));
            let f = g.matmul(xn, w1);
            let f = g.add_row(f, b1);
            let f = g.silu(f);
            let f = g.matmul(f, w2);
            let f = g.add_row(f, b2);
            x = g.add(x, f);
        }
        let (gam, bet) = (self.p(g, lay.lnf_g), self.p(g, lay.lnf_b));
        g.layer_norm(x, gam, bet)
    }

    /// Log-probabilities `1×k` over extension candidates.
    ///
    /// `members[c]` are the nodes of candidate `c`, `terminal[c]` the route
    /// terminal it attaches to (none for an empty route) and `shape` is `k×2`
    /// holding `[length / MAX, attaches-at-front]`.
    pub fn extension_head<'a>(
        &'a self,
        g: &mut Graph<'a>,
        y: Var,
        global: Var,
        members: Vec<Vec<usize>>,
        terminal: Vec<Option<usize>>,
        shape: Var,
    ) -> Var {
        let lay = &self.layout;
        let wm = self.p(g, lay.ext_mean);
        let wt = self.p(g, lay.ext_term);
        let ws = self.p(g, lay.ext_shape);
        let wg = self.p(g, lay.ext_global);
        let b1 = self.p(g, lay.ext_b1);
        let wout = self.p(g, lay.ext_out);

        let ym = g.matmul(y, wm);
        let yt = g.matmul(y, wt);
        let mean = g.segment_mean(ym, members);
        let term = g.gather_rows(yt, terminal);
        let sh = g.matmul(shape, ws);
        let gl = g.matmul(global, wg);
        let gl = g.add(gl, b1);
        let h = g.add(mean, term);
        let h = g.add(h, sh);
        let h = g.add_row(h, gl);
        let h = g.silu(h);
        let logits = g.matmul_bt(wout, h);
        g.log_softmax_rows(logits)
    }

    /// `1×2` row of `[log p(continue), log p(halt)]`.
    pub fn halt_head<'a>(&'a self, g: &mut Graph<'a>, y: Var, global: Var, current: &[usize]) -> Var {
        let lay = &self.layout;
        let route = g.segment_mean(y, vec![current.to_vec()]);
        let input = g.concat_cols(&[route, global]);
        let (w1, b1, w2, b2) = (
            self.p(g, lay.halt_w1),
            self.p(g, lay.halt_b1),
            self.p(g, lay.halt_w2),
            self.p(g, lay.halt_b2),
        );
        let h = g.matmul(input, w1);
        let h = g.add(h, b1);
        let h = g.silu(h);
        let z = g.matmul(h, w2);
        let z = g.add(z, b2);
        let halt = g.log_sigmoid(z);
        let neg = g.scale(z, -1.0);
        let cont = g.log_sigmoid(neg);
        g.concat_cols(&[cont, halt])
    }

    /// Predicted return for a `1×(descriptor + 1)` input row.
    pub fn baseline_forward<'a>(&'a self, g: &mut Graph<'a>, input: Var) -> Var {
        let lay = &self.baseline_layout;
        let (w1, b1, w2, b2, w3, b3) = (
            self.b(g, lay.w1),
            self.b(g, lay.b1),
            self.b(g, lay.w2),
            self.b(g, lay.b2),
            self.b(g, lay.w3),
            self.b(g, lay.b3),
        );
        let h = g.matmul(input, w1);
        let h = g.add(h, b1);
        let h = g.silu(h);
        let h = g.matmul(h, w2);
        let h = g.add(h, b2);
        let h = g.silu(h);
        let o = g.matmul(h, w3);
        g.add(o, b3)
    }
}
