//! Root-sampling UCT against a particle belief over the human.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::particles::{ParticleBelief, StmParticle};
use crate::env::centaur_action;
use crate::error::{Error, Result};
use crate::model::TabularModel;

fn default_iterations() -> usize {
    2_000
}
fn default_c_uct() -> f64 {
    5.0
}
fn default_max_depth() -> usize {
    100
}
fn default_heuristic() -> String {
    "none".into()
}
fn default_lambda() -> f64 {
    0.95
}
fn default_rollout_depth() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_c_uct")]
    pub c_uct: f64,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    #[serde(default = "default_heuristic")]
    pub heuristic: String,
    /// The machine's exponential discount inside the search.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Steps of one-step-lookahead rollout (against the sampled particle)
    /// below a new leaf before the heuristic value is taken; 0 values leaves
    /// with the heuristic alone.
    #[serde(default = "default_rollout_depth")]
    pub rollout_depth: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            c_uct: default_c_uct(),
            max_depth: default_max_depth(),
            heuristic: default_heuristic(),
            lambda: default_lambda(),
            rollout_depth: default_rollout_depth(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.max_depth == 0 {
            return Err(Error::InvalidSpec("planner needs iterations >= 1 and max_depth >= 1".into()));
        }
        if !(self.c_uct >= 0.0) || !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidSpec("planner needs c_uct >= 0 and lambda in (0, 1)".into()));
        }
        Ok(())
    }
}

/// The machine's own view of the task as used by the search: its STM
/// dynamics and rewards plus the cost it pays per override.
#[derive(Debug, Clone)]
pub struct SearchModel {
    model: Arc<TabularModel>,
    /// Per `(a, s)`: successor states with cumulative probabilities.
    rows: Vec<Vec<(usize, f64)>>,
    pub c_m: f64,
}

impl SearchModel {
    pub fn new(model: Arc<TabularModel>, c_m: f64) -> Result<Self> {
        if !model.is_fully_observable() {
            return Err(Error::NotFullyObservable);
        }
        let (n, na) = (model.n_states(), model.n_actions());
        let mut rows = Vec::with_capacity(n * na);
        for a in 0..na {
            for s in 0..n {
                let mut acc = 0.0;
                let row: Vec<(usize, f64)> = model
                    .transition_row(a, s)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(j, &p)| {
                        acc += p;
                        (j, acc)
                    })
                    .collect();
                rows.push(row);
            }
        }
        Ok(Self { model, rows, c_m })
    }

    pub fn model(&self) -> &TabularModel {
        &self.model
    }

    /// One-step lookahead `R(s, a) + λ E[h(s')]` for every `(s, a)`, row-major.
    pub fn lookahead(&self, heuristic: &[f64], lambda: f64) -> Vec<f64> {
        let (n, na) = (self.model.n_states(), self.model.n_actions());
        let mut out = vec![0.0; n * na];
        for s in 0..n {
            for a in 0..na {
                let mut prev = 0.0;
                let mut ev = 0.0;
                for &(j, c) in &self.rows[a * n + s] {
                    ev += (c - prev) * heuristic[j];
                    prev = c;
                }
                out[s * na + a] = self.model.r(s, a) + lambda * ev;
            }
        }
        out
    }

    #[inline]
    fn sample(&self, a: usize, s: usize, u: f64) -> usize {
        let row = &self.rows[a * self.model.n_states() + s];
        let total = row.last().map_or(1.0, |r| r.1);
        let target = u * total;
        row.iter().find(|r| target < r.1).unwrap_or(row.last().unwrap()).0
    }
}

struct Node {
    visits: u32,
    action_visits: Vec<u32>,
    action_values: Vec<f64>,
    /// `(a_m, response code, next state, child index)`.
    children: Vec<(u32, u16, u32, u32)>,
}

impl Node {
    fn new(na: usize) -> Self {
        Self { visits: 0, action_visits: vec![0; na], action_values: vec![0.0; na], children: Vec::new() }
    }
}

/// Plans one machine proposal.
///
/// Each simulation draws a particle in proportion to its weight and keeps it
/// for the whole simulation; the particle's tabulated responses decide the
/// executed action and the machine's model moves the world. Leaves are valued
/// with `heuristic[s]` (one entry per state), except at the end of the
/// remaining horizon where the value is zero. The proposal with the most
/// visits at the root wins.
pub fn plan(
    belief: &ParticleBelief,
    state: usize,
    steps_left: usize,
    search: &SearchModel,
    heuristic: &[f64],
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    plan_with_rng(belief, state, steps_left, search, heuristic, cfg, &mut rng)
}

/// Root statistics of one search.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub action: usize,
    pub visits: Vec<u32>,
    pub values: Vec<f64>,
}

/// [`plan`] with the root's visit counts and mean returns.
pub fn plan_detailed(
    belief: &ParticleBelief,
    state: usize,
    steps_left: usize,
    search: &SearchModel,
    heuristic: &[f64],
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<PlanOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    search_root(belief, state, steps_left, search, heuristic, cfg, &mut rng)
}

pub(crate) fn plan_with_rng<R: Rng>(
    belief: &ParticleBelief,
    state: usize,
    steps_left: usize,
    search: &SearchModel,
    heuristic: &[f64],
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Result<usize> {
    Ok(search_root(belief, state, steps_left, search, heuristic, cfg, rng)?.action)
}

fn search_root<R: Rng>(
    belief: &ParticleBelief,
    state: usize,
    steps_left: usize,
    search: &SearchModel,
    heuristic: &[f64],
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Result<PlanOutcome> {
    cfg.validate()?;
    let model = search.model();
    model.check_state(state)?;
    if heuristic.len() != model.n_states() {
        return Err(Error::InvalidSpec("heuristic must have one value per state".into()));
    }
    if steps_left == 0 {
        return Err(Error::EpisodeTerminated);
    }
    let cum = belief.cumulative()?;
    let total = *cum.last().unwrap();
    let na = model.n_actions();
    let mut tree = vec![Node::new(na)];
    let mut path: Vec<(usize, usize, f64)> = Vec::with_capacity(cfg.max_depth.min(steps_left));
    let lookahead = if cfg.rollout_depth > 0 { search.lookahead(heuristic, cfg.lambda) } else { Vec::new() };

    for _ in 0..cfg.iterations {
        let u = rng.gen::<f64>() * total;
        let k = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        let particle = &belief.particles[k];
        path.clear();
        let (mut node, mut s, mut depth) = (0usize, state, 0usize);
        let leaf = loop {
            if model.is_terminal(s) || depth == steps_left {
                break 0.0;
            }
            if depth == cfg.max_depth {
                break heuristic[s];
            }
            let a = select(&tree[node], cfg.c_uct, rng);
            let resp = particle.response(s, a);
            let a_c = centaur_action(a, resp);
            let r = model.r(s, a_c) - if resp.is_override() { search.c_m } else { 0.0 };
            let next = search.sample(a_c, s, rng.gen());
            path.push((node, a, r));
            depth += 1;
            let key = (a as u32, resp.code(), next as u32);
            match tree[node].children.iter().find(|c| (c.0, c.1, c.2) == key) {
                Some(c) => {
                    node = c.3 as usize;
                    s = next;
                }
                None => {
                    let child = tree.len();
                    tree.push(Node::new(na));
                    tree[node].children.push((key.0, key.1, key.2, child as u32));
                    break rollout(particle, next, depth, steps_left, &lookahead, search, heuristic, cfg, rng);
                }
            }
        };
        let mut g = leaf;
        for &(n, a, r) in path.iter().rev() {
            g = r + cfg.lambda * g;
            let node = &mut tree[n];
            node.visits += 1;
            node.action_visits[a] += 1;
            node.action_values[a] += (g - node.action_values[a]) / node.action_visits[a] as f64;
        }
    }
    let root = &tree[0];
    let best = (0..na)
        .max_by(|&a, &b| {
            root.action_visits[a]
                .cmp(&root.action_visits[b])
                .then(root.action_values[a].total_cmp(&root.action_values[b]))
                .then(b.cmp(&a))
        })
        .unwrap();
    Ok(PlanOutcome { action: best, visits: root.action_visits.clone(), values: root.action_values.clone() })
}

/// Value of a new leaf. For up to `rollout_depth` steps the machine proposes
/// whatever maximizes the one-step lookahead of the action the sampled
/// particle lets through (override cost included); then the heuristic takes
/// over.
#[allow(clippy::too_many_arguments)]
fn rollout<R: Rng>(
    particle: &StmParticle,
    mut s: usize,
    mut depth: usize,
    steps_left: usize,
    lookahead: &[f64],
    search: &SearchModel,
    heuristic: &[f64],
    cfg: &PlannerConfig,
    rng: &mut R,
) -> f64 {
    let model = search.model();
    let na = model.n_actions();
    let (mut g, mut disc) = (0.0, 1.0);
    for _ in 0..cfg.rollout_depth {
        if model.is_terminal(s) || depth == steps_left {
            return g;
        }
        let mut best = (0, false, f64::NEG_INFINITY);
        for a_m in 0..na {
            let resp = particle.response(s, a_m);
            let a_c = centaur_action(a_m, resp);
            let v = lookahead[s * na + a_c] - if resp.is_override() { search.c_m } else { 0.0 };
            if v > best.2 {
                best = (a_c, resp.is_override(), v);
            }
        }
        let (a_c, overridden, _) = best;
        g += disc * (model.r(s, a_c) - if overridden { search.c_m } else { 0.0 });
        disc *= cfg.lambda;
        s = search.sample(a_c, s, rng.gen());
        depth += 1;
    }
    if model.is_terminal(s) || depth == steps_left {
        g
    } else {
        g + disc * heuristic[s]
    }
}

fn select<R: Rng>(node: &Node, c: f64, rng: &mut R) -> usize {
    let na = node.action_visits.len();
    let unvisited = node.action_visits.iter().filter(|&&v| v == 0).count();
    if unvisited > 0 {
        let pick = rng.gen_range(0..unvisited);
        return (0..na).filter(|&a| node.action_visits[a] == 0).nth(pick).unwrap();
    }
    let ln_n = (node.visits as f64).ln();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for a in 0..na {
        let score = node.action_values[a] + c * (ln_n / node.action_visits[a] as f64).sqrt();
        if score > best_score {
            best_score = score;
            best = a;
        }
    }
    best
}
