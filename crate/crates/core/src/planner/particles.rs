//! Weighted particles over the human's subjective task model.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::human::{HumanResponse, OverrideTable, Signature, SubjectiveTaskModel};

/// Parameters of one particle: the parameter that shapes the human's STM and
/// the override cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParticleParams {
    Hyperbolic { gamma: f64, c_h: f64 },
    Noise { epsilon: f64, c_h: f64 },
}

impl ParticleParams {
    pub fn c_h(&self) -> f64 {
        match *self {
            ParticleParams::Hyperbolic { c_h, .. } | ParticleParams::Noise { c_h, .. } => c_h,
        }
    }

    /// γ or ε.
    pub fn model_param(&self) -> f64 {
        match *self {
            ParticleParams::Hyperbolic { gamma, .. } => gamma,
            ParticleParams::Noise { epsilon, .. } => epsilon,
        }
    }

    pub fn model_param_name(&self) -> &'static str {
        match self {
            ParticleParams::Hyperbolic { .. } => "gamma",
            ParticleParams::Noise { .. } => "epsilon",
        }
    }

    /// Same kind of parameter with new values.
    pub fn with_values(&self, model_param: f64, c_h: f64) -> Self {
        match self {
            ParticleParams::Hyperbolic { .. } => ParticleParams::Hyperbolic { gamma: model_param, c_h },
            ParticleParams::Noise { .. } => ParticleParams::Noise { epsilon: model_param, c_h },
        }
    }

    fn model_key(&self) -> (u8, u64) {
        match self {
            ParticleParams::Hyperbolic { gamma, .. } => (0, gamma.to_bits()),
            ParticleParams::Noise { epsilon, .. } => (1, epsilon.to_bits()),
        }
    }
}

/// Turns particle parameters into solved human STMs for one environment.
pub trait ParticleSolver: Send + Sync {
    /// Solves the STM selected by the model parameter. The override cost of
    /// the result is irrelevant; callers attach the particle's own.
    fn solve_model(&self, params: &ParticleParams) -> Result<SubjectiveTaskModel>;

    /// The unsolved STM selected by the model parameter, for attaching a
    /// Q-table solved elsewhere.
    fn task_model(&self, params: &ParticleParams) -> Result<SubjectiveTaskModel>;

    /// Whether the parameters describe a valid STM.
    fn feasible(&self, params: &ParticleParams) -> bool;

    /// Pulls perturbed parameters back into the feasible region.
    fn clamp(&self, params: ParticleParams) -> ParticleParams;
}

#[derive(Debug, Clone)]
pub struct StmParticle {
    pub id: usize,
    pub params: ParticleParams,
    pub weight: f64,
    /// `None` for pseudo-particles that carry only a response table.
    pub stm: Option<SubjectiveTaskModel>,
    pub table: Arc<OverrideTable>,
}

impl StmParticle {
    pub fn from_stm(id: usize, params: ParticleParams, weight: f64, stm: SubjectiveTaskModel) -> Result<Self> {
        let table = Arc::new(OverrideTable::build(&stm)?);
        Ok(Self { id, params, weight, stm: Some(stm), table })
    }

    /// A particle that only knows how the human responds.
    pub fn from_table(id: usize, params: ParticleParams, weight: f64, table: OverrideTable) -> Self {
        Self { id, params, weight, stm: None, table: Arc::new(table) }
    }

    #[inline]
    pub fn response(&self, s: usize, a_m: usize) -> HumanResponse {
        self.table.response(s, a_m)
    }

    pub fn signature(&self, probe_states: &[usize]) -> Signature {
        self.table.signature(probe_states)
    }
}

/// One filtered observation: the proposal made in a state and the response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observed {
    pub state: usize,
    pub a_m: usize,
    pub response: HumanResponse,
}

#[derive(Debug, Clone)]
pub struct ParticleBelief {
    pub particles: Vec<StmParticle>,
    /// Copy of the initial particle set, used when every particle dies.
    prior: Vec<StmParticle>,
    target_size: usize,
    next_id: usize,
}

impl ParticleBelief {
    /// Normalizes the weights and archives the set as the prior.
    pub fn new(mut particles: Vec<StmParticle>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::EmptyGrid);
        }
        normalize(&mut particles)?;
        let next_id = particles.iter().map(|p| p.id + 1).max().unwrap_or(0);
        Ok(Self { prior: particles.clone(), target_size: particles.len(), particles, next_id })
    }

    pub fn single(particle: StmParticle) -> Self {
        Self::new(vec![particle]).expect("one particle with weight 1")
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn support_size(&self) -> usize {
        self.particles.iter().filter(|p| p.weight > 0.0).count()
    }

    pub fn prior(&self) -> &[StmParticle] {
        &self.prior
    }

    /// Total weight of the particles satisfying `pred`.
    pub fn mass_where(&self, pred: impl Fn(&StmParticle) -> bool) -> f64 {
        self.particles.iter().filter(|p| pred(p)).map(|p| p.weight).sum()
    }

    /// Zeroes every particle whose response to `a_m` at `state` differs from
    /// `observed` and renormalizes. Leaves the belief untouched and returns
    /// `AllParticlesEliminated` if nothing survives.
    pub fn filter(&mut self, state: usize, a_m: usize, observed: HumanResponse) -> Result<()> {
        let surviving: f64 = self
            .particles
            .iter()
            .filter(|p| p.weight > 0.0 && p.response(state, a_m) == observed)
            .map(|p| p.weight)
            .sum();
        if !(surviving > 0.0) {
            return Err(Error::AllParticlesEliminated);
        }
        for p in &mut self.particles {
            if p.response(state, a_m) != observed {
                p.weight = 0.0;
            }
        }
        normalize(&mut self.particles)
    }

    /// Drops zero-weight particles.
    pub fn prune(&mut self) {
        self.particles.retain(|p| p.weight > 0.0);
    }

    /// Cumulative weights for sampling.
    pub fn cumulative(&self) -> Result<Vec<f64>> {
        let mut acc = 0.0;
        let cum: Vec<f64> = self
            .particles
            .iter()
            .map(|p| {
                acc += p.weight;
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(Error::DegenerateBelief);
        }
        Ok(cum)
    }
}

fn normalize(particles: &mut [StmParticle]) -> Result<()> {
    if particles.iter().any(|p| !(p.weight >= 0.0) || !p.weight.is_finite()) {
        return Err(Error::InvalidBelief("particle weights must be finite and non-negative".into()));
    }
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateBelief);
    }
    for p in particles.iter_mut() {
        p.weight /= total;
    }
    Ok(())
}

/// Solves every feasible grid point (each distinct model parameter once) and
/// returns a uniform belief. Infeasible points are skipped with a warning.
pub fn init_particles(grid: &[ParticleParams], solver: &dyn ParticleSolver) -> Result<ParticleBelief> {
    let feasible: Vec<ParticleParams> = grid
        .iter()
        .copied()
        .filter(|p| {
            let ok = solver.feasible(p);
            if !ok {
                warn!("dropping infeasible particle {p:?}");
            }
            ok
        })
        .collect();
    if feasible.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut keys: Vec<(u8, u64)> = Vec::new();
    let mut reps: Vec<ParticleParams> = Vec::new();
    for p in &feasible {
        if !keys.contains(&p.model_key()) {
            keys.push(p.model_key());
            reps.push(*p);
        }
    }
    let solved: Vec<SubjectiveTaskModel> =
        reps.par_iter().map(|p| solver.solve_model(p)).collect::<Result<Vec<_>>>()?;
    let by_key: HashMap<(u8, u64), &SubjectiveTaskModel> = keys.iter().copied().zip(solved.iter()).collect();
    let w = 1.0 / feasible.len() as f64;
    let particles = feasible
        .par_iter()
        .enumerate()
        .map(|(id, p)| {
            let stm = by_key[&p.model_key()].with_override_cost(p.c_h())?;
            StmParticle::from_stm(id, *p, w, stm)
        })
        .collect::<Result<Vec<_>>>()?;
    ParticleBelief::new(particles)
}

/// Pure form of [`ParticleBelief::filter`].
pub fn filter_particles(
    belief: &ParticleBelief,
    state: usize,
    a_m: usize,
    observed: HumanResponse,
) -> Result<ParticleBelief> {
    let mut next = belief.clone();
    next.filter(state, a_m, observed)?;
    Ok(next)
}

/// Upper bound on particles solved online per reinvigoration.
pub const MAX_NEW_PARTICLES: usize = 32;

/// Restores the particle count after filtering has thinned the set.
///
/// Survivors are kept. Up to [`MAX_NEW_PARTICLES`] jittered children of
/// survivors are solved (each parameter moves by at most `scale`) and kept
/// only if they reproduce every response in `history`; the rest of the gap is
/// filled with duplicates. A parent shares its weight equally with its
/// offspring. With no survivors the archived prior comes back.
pub fn reinvigorate<R: Rng>(
    belief: &ParticleBelief,
    scale: f64,
    solver: Option<&dyn ParticleSolver>,
    history: &[Observed],
    rng: &mut R,
) -> Result<ParticleBelief> {
    let mut survivors: Vec<StmParticle> = belief.particles.iter().filter(|p| p.weight > 0.0).cloned().collect();
    if survivors.is_empty() {
        if belief.prior.is_empty() {
            return Err(Error::NoSurvivors);
        }
        warn!("no surviving particles; falling back to the prior");
        let mut fresh = belief.clone();
        fresh.particles = belief.prior.clone();
        let w = 1.0 / fresh.particles.len() as f64;
        fresh.particles.iter_mut().for_each(|p| p.weight = w);
        return Ok(fresh);
    }
    let mut next_id = belief.next_id;
    let deficit = belief.target_size.saturating_sub(survivors.len());
    // Offspring per survivor index, so weights can be split at the end.
    let mut offspring: Vec<Vec<StmParticle>> = vec![Vec::new(); survivors.len()];
    let mut added = 0;

    if scale > 0.0 {
        if let Some(solver) = solver {
            let cum: Vec<f64> = survivors
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p.weight;
                    Some(*acc)
                })
                .collect();
            let total = *cum.last().unwrap();
            let attempts = deficit.min(MAX_NEW_PARTICLES);
            for _ in 0..attempts {
                let u = rng.gen::<f64>() * total;
                let parent = cum.partition_point(|&c| c <= u).min(survivors.len() - 1);
                let pp = survivors[parent].params;
                let jittered = solver.clamp(pp.with_values(
                    pp.model_param() + scale * rng.gen_range(-1.0..=1.0),
                    pp.c_h() + scale * rng.gen_range(-1.0..=1.0),
                ));
                if !solver.feasible(&jittered) {
                    continue;
                }
                let stm = solver.solve_model(&jittered)?.with_override_cost(jittered.c_h())?;
                let child = StmParticle::from_stm(next_id, jittered, 0.0, stm)?;
                if history.iter().all(|h| child.response(h.state, h.a_m) == h.response) {
                    next_id += 1;
                    added += 1;
                    offspring[parent].push(child);
                }
            }
        }
    }
    // Duplicates for the remaining slots, heaviest survivors first.
    let mut order: Vec<usize> = (0..survivors.len()).collect();
    order.sort_by(|&a, &b| survivors[b].weight.total_cmp(&survivors[a].weight).then(a.cmp(&b)));
    let mut k = 0;
    while added < deficit {
        let parent = order[k % order.len()];
        let mut dup = survivors[parent].clone();
        dup.id = next_id;
        next_id += 1;
        offspring[parent].push(dup);
        added += 1;
        k += 1;
    }

    let mut particles = Vec::with_capacity(belief.target_size.max(survivors.len()));
    for (parent, kids) in survivors.iter_mut().zip(offspring) {
        let share = parent.weight / (kids.len() + 1) as f64;
        parent.weight = share;
        particles.push(parent.clone());
        for mut kid in kids {
            kid.weight = share;
            particles.push(kid);
        }
    }
    normalize(&mut particles)?;
    Ok(ParticleBelief { particles, prior: belief.prior.clone(), target_size: belief.target_size, next_id })
}

/// Weights of the live particles after some filtering step.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSnapshot {
    pub step: usize,
    pub entries: Vec<(usize, ParticleParams, f64)>,
}

impl PosteriorSnapshot {
    pub fn capture(step: usize, belief: &ParticleBelief) -> Self {
        let entries = belief.particles.iter().filter(|p| p.weight > 0.0).map(|p| (p.id, p.params, p.weight)).collect();
        Self { step, entries }
    }
}

/// CSV with columns `step,particle_id,param,value,c_h,weight`, where `param`
/// names the model parameter (`gamma` or `epsilon`). Zero-weight particles
/// are omitted.
pub fn write_posterior_csv<W: Write>(snapshots: &[PosteriorSnapshot], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "particle_id", "param", "value", "c_h", "weight"])?;
    for snap in snapshots {
        for (id, params, weight) in &snap.entries {
            w.write_record([
                snap.step.to_string(),
                id.to_string(),
                params.model_param_name().to_string(),
                params.model_param().to_string(),
                params.c_h().to_string(),
                weight.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
