//! The learned policy behind the [`ConstructionPolicy`] interface.

use std::cell::RefCell;

use super::features::compute_features;
use super::graph::{Graph, Var};
use super::model::PolicyParams;
use super::tensor::Tensor;
use crate::city::City;
use crate::error::{Error, Result};
use crate::mdp::{AttachEnd, ConstructionPolicy, ExtensionAction, MdpState};

/// Identifies the inputs of one backbone pass.
#[derive(Debug, Clone, PartialEq)]
struct StateKey {
    city: usize,
    city_len: usize,
    city_demand: u64,
    finished: Vec<Vec<usize>>,
    current: Vec<usize>,
    alpha: u64,
    routes: usize,
    max_len: usize,
}

impl StateKey {
    fn new(city: &City, state: &MdpState) -> Self {
        StateKey {
            city: city as *const City as usize,
            city_len: city.len(),
            city_demand: city.total_demand().to_bits(),
            finished: state.finished.clone(),
            current: state.current.clone(),
            alpha: state.alpha.to_bits(),
            routes: state.params.routes,
            max_len: state.params.max_len,
        }
    }
}

struct Tape<'a> {
    graph: Graph<'a>,
    cached: Option<(StateKey, Var, Var)>,
    outputs: Vec<Var>,
}

/// Neural construction policy.
///
/// Backbone embeddings are cached per state, so a halt decision and the
/// extension that follows it share one pass. In recording mode the whole
/// episode stays on one tape and every policy output is kept so the caller
/// can back-propagate through the chosen actions.
pub struct NeuralPolicy<'a> {
    params: &'a PolicyParams,
    record: bool,
    tape: RefCell<Tape<'a>>,
}

impl<'a> NeuralPolicy<'a> {
    pub fn new(params: &'a PolicyParams) -> Self {
        Self::build(params, false)
    }

    /// Keeps the full computation for [`NeuralPolicy::into_tape`].
    pub fn recording(params: &'a PolicyParams) -> Self {
        Self::build(params, true)
    }

    fn build(params: &'a PolicyParams, record: bool) -> Self {
        NeuralPolicy {
            params,
            record,
            tape: RefCell::new(Tape {
                graph: Graph::new(),
                cached: None,
                outputs: Vec::new(),
            }),
        }
    }

    pub fn params(&self) -> &'a PolicyParams {
        self.params
    }

    /// The tape and one `1×k` log-probability row per policy query, in call order.
    pub fn into_tape(self) -> (Graph<'a>, Vec<Var>) {
        let t = self.tape.into_inner();
        (t.graph, t.outputs)
    }

    /// Embeddings and standardized global features for `state`.
    fn embed(&self, tape: &mut Tape<'a>, city: &City, state: &MdpState) -> Result<(Var, Var)> {
        let key = StateKey::new(city, state);
        if let Some((k, y, g)) = &tape.cached {
            if *k == key {
                return Ok((*y, *g));
            }
        }
        if !self.record {
            tape.graph = Graph::new();
        }
        let f = compute_features(city, state, state.alpha, self.params.norm_stats.as_ref())?;
        let g = &mut tape.graph;
        let node = g.constant(f.node);
        let edge = g.constant(f.edge);
        let global = g.constant(f.global);
        let y = self.params.backbone(g, node, edge);
        if !g.value(y).is_finite() {
            return Err(Error::NonFinite("backbone embeddings".into()));
        }
        tape.cached = Some((key, y, global));
        Ok((y, global))
    }

    fn finish(&self, tape: &mut Tape<'a>, out: Var, what: &str) -> Result<Vec<f64>> {
        let v = tape.graph.value(out).data.clone();
        if v.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::NonFinite(what.into()));
        }
        if self.record {
            tape.outputs.push(out);
        }
        Ok(v)
    }
}

impl ConstructionPolicy for NeuralPolicy<'_> {
    fn extension_log_probs(
        &self,
        city: &City,
        state: &MdpState,
        candidates: &[ExtensionAction],
    ) -> Result<Vec<f64>> {
        if candidates.is_empty() {
            return Err(Error::Contract("no extension candidates to score".into()));
        }
        let mut tape = self.tape.borrow_mut();
        let (y, global) = self.embed(&mut tape, city, state)?;
        let max_len = state.params.max_len as f64;
        let mut shape = Tensor::zeros(candidates.len(), 2);
        let mut members = Vec::with_capacity(candidates.len());
        let mut terminal = Vec::with_capacity(candidates.len());
        for (c, cand) in candidates.iter().enumerate() {
            shape.data[2 * c] = cand.path.len() as f64 / max_len;
            shape.data[2 * c + 1] = (cand.end == AttachEnd::Front) as u8 as f64;
            members.push(cand.path.clone());
            terminal.push(match cand.end {
                AttachEnd::Back => state.current.last().copied(),
                AttachEnd::Front => state.current.first().copied(),
            });
        }
        let g = &mut tape.graph;
        let shape = g.constant(shape);
        let out = self.params.extension_head(g, y, global, members, terminal, shape);
        self.finish(&mut tape, out, "extension log-probabilities")
    }

    fn halt_log_probs(&self, city: &City, state: &MdpState) -> Result<(f64, f64)> {
        let mut tape = self.tape.borrow_mut();
        let (y, global) = self.embed(&mut tape, city, state)?;
        let out = self.params.halt_head(&mut tape.graph, y, global, &state.current);
        let v = self.finish(&mut tape, out, "halt log-probabilities")?;
        Ok((v[0], v[1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::city::NdpParams;
    use crate::mdp::{enumerate_extensions, init_state, ExtensionAction};
    use crate::nn::features::NormStats;
    use crate::nn::model::PolicyConfig;

    fn city5() -> City {
        let pos = vec![[0.0, 0.0], [900.0, 100.0], [1700.0, -200.0], [800.0, 1100.0], [2600.0, 900.0]];
        let edges = [(0, 1, 61.0), (1, 2, 57.0), (1, 3, 73.0), (2, 4, 88.0), (3, 4, 121.0), (0, 3, 97.0)];
        let mut d = vec![0.0; 25];
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    d[i * 5 + j] = 60.0 + ((i * 7 + j * 7) % 11) as f64 * 40.0;
                }
            }
        }
        City::new(pos, &edges, d, false).unwrap()
    }

    fn params() -> PolicyParams {
        let cfg = PolicyConfig {
            layers: 2,
            heads: 2,
            embed_dim: 8,
            ff_dim: 16,
            head_hidden: 8,
            baseline_hidden: 8,
        };
        let mut stats = NormStats::identity();
        stats.node.std = vec![1000.0, 1000.0, 1000.0, 1.0, 1.0, 1.0];
        stats.edge.std = vec![300.0, 100.0, 100.0, 1.0, 1.0, 1.0];
        PolicyParams::init(cfg, 5).unwrap().with_norm_stats(stats)
    }

    fn mid_state() -> MdpState {
        let mut s = init_state(NdpParams::new(3, 2, 4), 0.4);
        s.finished.push(vec![0, 1, 2]);
        s.current = vec![3, 4];
        s
    }

    #[test]
    fn distributions_are_normalized() {
        let c = city5();
        let p = params();
        let pol = NeuralPolicy::new(&p);
        for s in [init_state(NdpParams::new(3, 2, 4), 0.9), mid_state()] {
            let cands = enumerate_extensions(&s, &c);
            let lp = pol.extension_log_probs(&c, &s, &cands).unwrap();
            let total: f64 = lp.iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
            let (cont, halt) = pol.halt_log_probs(&c, &s).unwrap();
            assert!((cont.exp() + halt.exp() - 1.0).abs() < 1e-12);
            assert!(halt.exp() > 0.0 && halt.exp() < 1.0);
        }
    }

    #[test]
    fn single_and_duplicated_candidates() {
        let c = city5();
        let p = params();
        let pol = NeuralPolicy::new(&p);
        let s = mid_state();
        let cands = enumerate_extensions(&s, &c);
        let one = pol.extension_log_probs(&c, &s, &cands[..1]).unwrap();
        assert_eq!(one, vec![0.0]);
        let doubled: Vec<ExtensionAction> = cands.iter().chain(&cands).cloned().collect();
        let lp = pol.extension_log_probs(&c, &s, &doubled).unwrap();
        let k = cands.len();
        for i in 0..k {
            assert!((lp[i] - lp[i + k]).abs() < 1e-12);
        }
        assert!(matches!(pol.extension_log_probs(&c, &s, &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn relabeling_nodes_permutes_probabilities() {
        let c = city5();
        let p = params();
        let perm = [3, 0, 4, 1, 2];
        let pc = c.permuted(&perm).unwrap();
        let s = mid_state();
        let mut ps = s.clone();
        ps.finished = s.finished.iter().map(|r| r.iter().map(|&v| perm[v]).collect()).collect();
        ps.current = s.current.iter().map(|&v| perm[v]).collect();

        let cands = enumerate_extensions(&s, &c);
        let pcands = enumerate_extensions(&ps, &pc);
        assert_eq!(cands.len(), pcands.len());
        let lp = NeuralPolicy::new(&p).extension_log_probs(&c, &s, &cands).unwrap();
        let plp = NeuralPolicy::new(&p).extension_log_probs(&pc, &ps, &pcands).unwrap();
        for (cand, v) in cands.iter().zip(&lp) {
            let mapped: Vec<usize> = cand.path.iter().map(|&x| perm[x]).collect();
            let j = pcands
                .iter()
                .position(|pcand| pcand.path == mapped && pcand.end == cand.end)
                .expect("candidate survives relabeling");
            assert!((v.exp() - plp[j].exp()).abs() < 1e-9);
        }
        let h = NeuralPolicy::new(&p).halt_log_probs(&c, &s).unwrap();
        let ph = NeuralPolicy::new(&p).halt_log_probs(&pc, &ps).unwrap();
        assert!((h.1 - ph.1).abs() < 1e-9);
    }

    /// Summed log-probability of one extension and one halt choice.
    fn decision_log_prob(p: &PolicyParams, c: &City, s: &MdpState) -> f64 {
        let pol = NeuralPolicy::new(p);
        let cands = enumerate_extensions(s, c);
        let lp = pol.extension_log_probs(c, s, &cands).unwrap();
        let (_, halt) = pol.halt_log_probs(c, s).unwrap();
        lp[1] + halt
    }

    #[test]
    fn gradients_match_finite_differences() {
        let c = city5();
        let p = params();
        let s = mid_state();
        let pol = NeuralPolicy::recording(&p);
        let cands = enumerate_extensions(&s, &c);
        pol.extension_log_probs(&c, &s, &cands).unwrap();
        pol.halt_log_probs(&c, &s).unwrap();
        let (mut g, outs) = pol.into_tape();
        let a = g.pick(outs[0], 0, 1);
        let b = g.pick(outs[1], 0, 1);
        let total = g.add(a, b);
        let mut grads = p.policy.zeros_like();
        for (i, t) in g.backward(total) {
            grads[i].add_assign(&t);
        }

        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for (ti, t) in p.policy.tensors.iter().enumerate() {
            for k in 0..t.len() {
                let mut plus = p.clone();
                plus.policy.tensors[ti].data[k] += eps;
                let mut minus = p.clone();
                minus.policy.tensors[ti].data[k] -= eps;
                let fd = (decision_log_prob(&plus, &c, &s) - decision_log_prob(&minus, &c, &s)) / (2.0 * eps);
                let an = grads[ti].data[k];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                worst = worst.max(err);
                assert!(err < 1e-4, "{} [{k}]: fd {fd} analytic {an}", p.policy.names[ti]);
            }
        }
        assert!(worst < 1e-4);
    }
}
