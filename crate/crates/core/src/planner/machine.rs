//! The planning machine as an episode participant.

use std::sync::Arc;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mcts::{plan_with_rng, PlannerConfig, SearchModel};
use super::particles::{reinvigorate, Observed, ParticleBelief, ParticleSolver, PosteriorSnapshot};
use crate::env::{MachineAgent, StepRecord};
use crate::error::{Error, Result};

/// Plans every proposal with the search and filters its particle belief on
/// each response. The belief (and the filtering history) carries over from
/// one episode to the next.
pub struct CentaurMachine {
    search: SearchModel,
    heuristic: Vec<f64>,
    cfg: PlannerConfig,
    pub belief: ParticleBelief,
    solver: Option<Arc<dyn ParticleSolver>>,
    pub perturbation_scale: f64,
    horizon: usize,
    seed: u64,
    /// Planning calls so far; selects the RNG stream of the next call.
    calls: u64,
    history: Vec<Observed>,
    /// Filtering steps so far, across episodes.
    pub steps: usize,
    pub snapshots: Vec<PosteriorSnapshot>,
    pub record_snapshots: bool,
    pub reinvigorations: usize,
    /// When false the belief is never filtered (e.g. a human-agnostic arm).
    pub learn: bool,
}

impl CentaurMachine {
    pub fn new(
        search: SearchModel,
        heuristic: Vec<f64>,
        cfg: PlannerConfig,
        belief: ParticleBelief,
        horizon: usize,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if heuristic.len() != search.model().n_states() {
            return Err(Error::InvalidSpec("heuristic must have one value per state".into()));
        }
        Ok(Self {
            search,
            heuristic,
            cfg,
            belief,
            solver: None,
            perturbation_scale: 0.0,
            horizon,
            seed,
            calls: 0,
            history: Vec::new(),
            steps: 0,
            snapshots: Vec::new(),
            record_snapshots: false,
            reinvigorations: 0,
            learn: true,
        })
    }

    /// Enables jittered reinvigoration with online solving.
    pub fn with_reinvigoration(mut self, solver: Arc<dyn ParticleSolver>, scale: f64) -> Self {
        self.solver = Some(solver);
        self.perturbation_scale = scale;
        self
    }

    pub fn with_snapshots(mut self) -> Self {
        self.record_snapshots = true;
        self.snapshots = vec![PosteriorSnapshot::capture(0, &self.belief)];
        self
    }

    fn snapshot(&mut self) {
        if self.record_snapshots {
            self.snapshots.push(PosteriorSnapshot::capture(self.steps, &self.belief));
        }
    }

    /// New belief after `obs` eliminated every particle. Jittered children of
    /// the particles alive before `obs` are tried first (they must agree with
    /// the whole history, `obs` included); failing that, the prior comes back
    /// and is filtered on `obs` when it can be.
    fn recover(&self, obs: Observed) -> Result<ParticleBelief> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed);
        rng.set_stream(self.steps as u64);
        if self.perturbation_scale > 0.0 {
            if let Some(solver) = self.solver.as_deref() {
                let mut grown = reinvigorate(&self.belief, self.perturbation_scale, Some(solver), &self.history, &mut rng)?;
                if grown.filter(obs.state, obs.a_m, obs.response).is_ok() {
                    grown.prune();
                    return reinvigorate(&grown, 0.0, None, &self.history, &mut rng);
                }
            }
        }
        let mut dead = self.belief.clone();
        dead.particles.iter_mut().for_each(|p| p.weight = 0.0);
        let mut fresh = reinvigorate(&dead, 0.0, None, &self.history, &mut rng)?;
        let _ = fresh.filter(obs.state, obs.a_m, obs.response);
        Ok(fresh)
    }
}

impl MachineAgent for CentaurMachine {
    fn propose(&mut self, state: usize, t: usize) -> Result<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.calls);
        self.calls += 1;
        let steps_left = self.horizon.saturating_sub(t).max(1);
        plan_with_rng(&self.belief, state, steps_left, &self.search, &self.heuristic, &self.cfg, &mut rng)
    }

    fn observe(&mut self, record: &StepRecord) -> Result<()> {
        if !self.learn {
            return Ok(());
        }
        let obs = Observed { state: record.state, a_m: record.a_m, response: record.a_h };
        self.history.push(obs);
        self.steps += 1;
        match self.belief.filter(obs.state, obs.a_m, obs.response) {
            Ok(()) => {}
            Err(Error::AllParticlesEliminated) => {
                debug!("all particles eliminated at step {}; reinvigorating", self.steps);
                self.belief = self.recover(obs)?;
                self.reinvigorations += 1;
            }
            Err(e) => return Err(e),
        }
        self.snapshot();
        Ok(())
    }
}
