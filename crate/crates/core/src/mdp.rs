//! Alternating extend/halt construction process.
//!
//! Odd timesteps choose a shortest-path extension of the route in progress;
//! even timesteps decide whether to finish it. The episode ends once `S`
//! routes are finished.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::city::{City, NdpParams};
use crate::cost::{total_cost, CostBreakdown, CostWeights};
use crate::error::{Error, Result};
use crate::network::{Network, Route};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttachEnd {
    Front,
    Back,
}

/// A shortest path to attach at one end of the route in progress.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExtensionAction {
    /// Nodes in route order once attached.
    pub path: Vec<usize>,
    pub end: AttachEnd,
}

impl ExtensionAction {
    /// The terminal the extended route will have on the attached side.
    pub fn new_terminal(&self) -> usize {
        match self.end {
            AttachEnd::Front => self.path[0],
            AttachEnd::Back => *self.path.last().expect("non-empty path"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HaltChoice {
    Continue,
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    Extend(ExtensionAction),
    Choose(HaltChoice),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Extension,
    Halt,
    Terminal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpState {
    pub finished: Vec<Route>,
    pub current: Route,
    pub t: usize,
    pub params: NdpParams,
    pub alpha: f64,
}

impl MdpState {
    pub fn phase(&self) -> Phase {
        if self.finished.len() >= self.params.routes {
            Phase::Terminal
        } else if self.t % 2 == 1 {
            Phase::Extension
        } else {
            Phase::Halt
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.phase() == Phase::Terminal
    }

    /// Stable digest of the full state (same build).
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.finished.hash(&mut h);
        self.current.hash(&mut h);
        self.t.hash(&mut h);
        self.params.hash(&mut h);
        self.alpha.to_bits().hash(&mut h);
        h.finish()
    }

    pub fn network(&self) -> Network {
        Network::new(self.finished.clone())
    }
}

/// Empty network, empty route, positioned at the first extension decision.
pub fn init_state(params: NdpParams, alpha: f64) -> MdpState {
    MdpState {
        finished: Vec::new(),
        current: Vec::new(),
        t: 1,
        params,
        alpha,
    }
}

/// State for regenerating one route given the other `S - 1`.
pub fn init_single_route_state(partial: &Network, params: NdpParams, alpha: f64) -> MdpState {
    MdpState {
        finished: partial.routes.clone(),
        current: Vec::new(),
        t: 1,
        params,
        alpha,
    }
}

fn sort_candidates(cands: &mut [ExtensionAction]) {
    cands.sort_by(|a, b| {
        (a.new_terminal(), a.path.len(), &a.path, a.end == AttachEnd::Front).cmp(&(
            b.new_terminal(),
            b.path.len(),
            &b.path,
            b.end == AttachEnd::Front,
        ))
    });
}

/// Visits legal extensions of a non-empty route; stops early when `visit` returns false.
fn for_each_extension(
    city: &City,
    current: &[usize],
    max_len: usize,
    mut visit: impl FnMut(Vec<usize>, AttachEnd) -> bool,
) {
    let n = city.len();
    let budget = max_len.saturating_sub(current.len());
    if budget == 0 {
        return;
    }
    let mut in_route = vec![false; n];
    for &v in current {
        in_route[v] = true;
    }
    let sp = city.paths();
    let disjoint = |p: &[usize]| p.iter().all(|&v| !in_route[v]);
    let first = current[0];
    let last = *current.last().expect("non-empty route");

    // append: path starts next to `last`
    for &(start, _) in city.neighbors(last) {
        if in_route[start] {
            continue;
        }
        for end in (0..n).filter(|&v| !in_route[v]) {
            let p = sp.canonical_path(start, end);
            if p.len() <= budget && disjoint(&p) && !visit(p, AttachEnd::Back) {
                return;
            }
        }
    }
    // prepend: path ends next to `first`
    for &(end, _) in city.neighbors(first) {
        if in_route[end] {
            continue;
        }
        for start in (0..n).filter(|&v| !in_route[v]) {
            let p = sp.canonical_path(start, end);
            if p.len() <= budget && disjoint(&p) && !visit(p, AttachEnd::Front) {
                return;
            }
        }
    }
}

/// All legal extensions in deterministic order.
///
/// For an empty route these are the canonical shortest paths of every
/// unordered node pair with at most `MAX` stops. Otherwise each path must be
/// node-disjoint from the route, fit in the remaining length budget, and
/// touch the route's last node (append) or first node (prepend) via a street
/// edge.
pub fn enumerate_extensions(state: &MdpState, city: &City) -> Vec<ExtensionAction> {
    let max_len = state.params.max_len;
    let mut out = Vec::new();
    if state.current.is_empty() {
        let n = city.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let p = city.paths().canonical_path(i, j);
                if p.len() <= max_len {
                    out.push(ExtensionAction {
                        path: p,
                        end: AttachEnd::Back,
                    });
                }
            }
        }
    } else {
        for_each_extension(city, &state.current, max_len, |path, end| {
            out.push(ExtensionAction { path, end });
            true
        });
    }
    sort_candidates(&mut out);
    out
}

fn extensions_exist(state: &MdpState, city: &City) -> bool {
    if state.current.is_empty() {
        return state.params.max_len >= 2 && city.len() >= 2;
    }
    let mut found = false;
    for_each_extension(city, &state.current, state.params.max_len, |_, _| {
        found = true;
        false
    });
    found
}

/// Legal halt-phase choices, in the fixed order `[Continue, Halt]`.
///
/// When no extension exists the route is halted even if it is shorter than
/// `MIN`, so every episode terminates.
pub fn halt_actions(state: &MdpState, city: &City) -> Vec<HaltChoice> {
    let len = state.current.len();
    let p = &state.params;
    if len >= p.max_len || !extensions_exist(state, city) {
        vec![HaltChoice::Halt]
    } else if len < p.min_len {
        vec![HaltChoice::Continue]
    } else {
        vec![HaltChoice::Continue, HaltChoice::Halt]
    }
}

fn check_extension(state: &MdpState, city: &City, ext: &ExtensionAction) -> Result<()> {
    let illegal = |why: &str| Err(Error::IllegalAction(format!("extension {:?}: {why}", ext.path)));
    let path = &ext.path;
    if path.is_empty() || path.iter().any(|&v| v >= city.len()) {
        return illegal("empty path or unknown node");
    }
    let (a, b) = (path[0], *path.last().unwrap());
    if *path != city.paths().canonical_path(a, b) {
        return illegal("not a stored shortest path");
    }
    let cur = &state.current;
    if cur.is_empty() {
        if path.len() < 2 || path.len() > state.params.max_len {
            return illegal("initial path length out of range");
        }
        return Ok(());
    }
    if path.len() + cur.len() > state.params.max_len {
        return illegal("exceeds MAX");
    }
    if path.iter().any(|v| cur.contains(v)) {
        return illegal("shares nodes with the route");
    }
    let touches = match ext.end {
        AttachEnd::Back => city.is_adjacent(*cur.last().unwrap(), a),
        AttachEnd::Front => city.is_adjacent(b, cur[0]),
    };
    if !touches {
        return illegal("not street-adjacent to the route terminal");
    }
    Ok(())
}

fn step_unchecked(state: &MdpState, action: &Action) -> MdpState {
    let mut next = state.clone();
    next.t += 1;
    match action {
        Action::Extend(ext) => match ext.end {
            AttachEnd::Back => next.current.extend_from_slice(&ext.path),
            AttachEnd::Front => {
                let mut r = ext.path.clone();
                r.extend_from_slice(&state.current);
                next.current = r;
            }
        },
        Action::Choose(HaltChoice::Continue) => {}
        Action::Choose(HaltChoice::Halt) => {
            let route = std::mem::take(&mut next.current);
            next.finished.push(route);
        }
    }
    next
}

/// Applies a legal action; illegal actions are contract violations.
pub fn apply_action(state: &MdpState, action: &Action, city: &City) -> Result<MdpState> {
    match (state.phase(), action) {
        (Phase::Extension, Action::Extend(ext)) => check_extension(state, city, ext)?,
        (Phase::Halt, Action::Choose(choice)) => {
            if state.current.is_empty() {
                return Err(Error::IllegalAction("halt decision on an empty route".into()));
            }
            if !halt_actions(state, city).contains(choice) {
                return Err(Error::IllegalAction(format!("{choice:?} not permitted here")));
            }
        }
        (phase, _) => {
            return Err(Error::IllegalAction(format!("{action:?} in phase {phase:?}")));
        }
    }
    Ok(step_unchecked(state, action))
}

/// A stochastic construction policy. Both methods return natural-log probabilities.
pub trait ConstructionPolicy {
    /// Log-probabilities over `candidates` (non-empty, in the given order).
    fn extension_log_probs(
        &self,
        city: &City,
        state: &MdpState,
        candidates: &[ExtensionAction],
    ) -> Result<Vec<f64>>;

    /// `(log p(continue), log p(halt))` at a halt decision where both are legal.
    fn halt_log_probs(&self, city: &City, state: &MdpState) -> Result<(f64, f64)>;
}

/// Uniform over extensions; fair coin for halting.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl ConstructionPolicy for UniformPolicy {
    fn extension_log_probs(&self, _: &City, _: &MdpState, c: &[ExtensionAction]) -> Result<Vec<f64>> {
        Ok(vec![-(c.len() as f64).ln(); c.len()])
    }

    fn halt_log_probs(&self, _: &City, _: &MdpState) -> Result<(f64, f64)> {
        Ok((0.5f64.ln(), 0.5f64.ln()))
    }
}

/// Uniform extensions, halts as soon as halting is legal.
#[derive(Debug, Clone, Copy, Default)]
pub struct EagerHaltPolicy;

impl ConstructionPolicy for EagerHaltPolicy {
    fn extension_log_probs(&self, c: &City, s: &MdpState, cands: &[ExtensionAction]) -> Result<Vec<f64>> {
        UniformPolicy.extension_log_probs(c, s, cands)
    }

    fn halt_log_probs(&self, _: &City, _: &MdpState) -> Result<(f64, f64)> {
        Ok((f64::NEG_INFINITY, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    Sample,
    Greedy,
}

fn choose<R: Rng + ?Sized>(log_probs: &[f64], selection: Selection, rng: &mut R) -> usize {
    match selection {
        Selection::Greedy => {
            let mut best = 0;
            for (i, &lp) in log_probs.iter().enumerate() {
                if lp > log_probs[best] {
                    best = i;
                }
            }
            best
        }
        Selection::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut last_positive = 0;
            for (i, &lp) in log_probs.iter().enumerate() {
                let p = lp.exp();
                if p > 0.0 {
                    last_positive = i;
                }
                acc += p;
                if u < acc {
                    return i;
                }
            }
            last_positive
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionKind {
    Ext,
    Halt,
}

/// One decision of an episode. `state` is the state the decision was taken in.
#[derive(Debug, Clone)]
pub struct Decision {
    pub state: MdpState,
    pub kind: DecisionKind,
    pub n_candidates: usize,
    pub chosen_index: usize,
    pub logp: f64,
}

/// Serializable summary of a decision, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: usize,
    pub kind: DecisionKind,
    pub n_candidates: usize,
    pub chosen_index: usize,
    pub logp: f64,
}

impl Decision {
    pub fn record(&self) -> DecisionRecord {
        DecisionRecord {
            t: self.state.t,
            kind: self.kind,
            n_candidates: self.n_candidates,
            chosen_index: self.chosen_index,
            logp: self.logp,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub network: Network,
    pub decisions: Vec<Decision>,
    pub cost: CostBreakdown,
}

impl Episode {
    /// Undiscounted return: the negative final cost.
    pub fn reward(&self) -> f64 {
        -self.cost.total
    }

    pub fn log_prob(&self) -> f64 {
        self.decisions.iter().map(|d| d.logp).sum()
    }

    pub fn to_jsonl(&self) -> String {
        self.decisions
            .iter()
            .map(|d| serde_json::to_string(&d.record()).expect("record serializes") + "\n")
            .collect()
    }
}

/// Takes one decision at a non-terminal state and returns the next state.
pub fn step<P, R>(
    city: &City,
    policy: &P,
    state: &MdpState,
    selection: Selection,
    rng: &mut R,
) -> Result<(MdpState, Decision)>
where
    P: ConstructionPolicy + ?Sized,
    R: Rng + ?Sized,
{
    match state.phase() {
        Phase::Extension => {
            let cands = enumerate_extensions(state, city);
            if cands.is_empty() {
                return Err(Error::Contract("extension phase with no legal extension".into()));
            }
            let lps = if cands.len() == 1 {
                vec![0.0]
            } else {
                policy.extension_log_probs(city, state, &cands)?
            };
            let idx = choose(&lps, selection, rng);
            let decision = Decision {
                state: state.clone(),
                kind: DecisionKind::Ext,
                n_candidates: cands.len(),
                chosen_index: idx,
                logp: lps[idx],
            };
            let action = Action::Extend(cands.into_iter().nth(idx).unwrap());
            Ok((step_unchecked(state, &action), decision))
        }
        Phase::Halt => {
            let legal = halt_actions(state, city);
            let lps = if legal.len() == 1 {
                vec![0.0]
            } else {
                let (c, h) = policy.halt_log_probs(city, state)?;
                vec![c, h]
            };
            let idx = choose(&lps, selection, rng);
            let decision = Decision {
                state: state.clone(),
                kind: DecisionKind::Halt,
                n_candidates: legal.len(),
                chosen_index: idx,
                logp: lps[idx],
            };
            Ok((step_unchecked(state, &Action::Choose(legal[idx])), decision))
        }
        Phase::Terminal => Err(Error::Contract("step on a terminal state".into())),
    }
}

/// Runs the process to completion and scores the resulting network.
pub fn rollout<P, R>(
    city: &City,
    policy: &P,
    params: NdpParams,
    weights: &CostWeights,
    selection: Selection,
    rng: &mut R,
) -> Result<Episode>
where
    P: ConstructionPolicy + ?Sized,
    R: Rng + ?Sized,
{
    params.validate(city.len())?;
    let mut state = init_state(params, weights.alpha);
    let mut decisions = Vec::new();
    while !state.is_terminal() {
        let (next, d) = step(city, policy, &state, selection, rng)?;
        decisions.push(d);
        state = next;
    }
    let network = state.network();
    let cost = total_cost(city, &network, &params, weights)?;
    Ok(Episode {
        network,
        decisions,
        cost,
    })
}

/// Builds one new route on top of `partial` (which holds `S - 1` routes).
pub fn rollout_single_route<P, R>(
    city: &City,
    partial: &Network,
    policy: &P,
    params: NdpParams,
    alpha: f64,
    selection: Selection,
    rng: &mut R,
) -> Result<(Route, Vec<Decision>)>
where
    P: ConstructionPolicy + ?Sized,
    R: Rng + ?Sized,
{
    if partial.len() + 1 != params.routes {
        return Err(Error::Contract(format!(
            "partial network has {} routes, expected {}",
            partial.len(),
            params.routes - 1
        )));
    }
    let mut state = init_single_route_state(partial, params, alpha);
    let mut decisions = Vec::new();
    while !state.is_terminal() {
        let (next, d) = step(city, policy, &state, selection, rng)?;
        decisions.push(d);
        state = next;
    }
    let route = state.finished.pop().expect("halt appended a route");
    Ok((route, decisions))
}
