//! One round of the override protocol and full episodes.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefState;
use crate::error::{Error, Result};
use crate::human::{moh_belief_step, moh_respond, HumanResponse, MoHState, SubjectiveTaskModel};
use crate::model::{sample_index, TabularModel};
use crate::solvers::Policy;

/// The executed action: the human's override if there is one, otherwise the
/// machine's proposal.
pub fn centaur_action(a_m: usize, response: HumanResponse) -> usize {
    match response {
        HumanResponse::Noop => a_m,
        HumanResponse::Override(a_h) => a_h,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub state: usize,
    pub a_m: usize,
    pub a_h: HumanResponse,
    pub a_c: usize,
    pub r_m: f64,
    pub r_h: f64,
    /// Next state for fully observable tasks, otherwise the observation.
    pub o: usize,
    pub next_state: usize,
}

impl StepRecord {
    pub fn overridden(&self) -> bool {
        self.a_h.is_override()
    }
}

/// Objective task, both subjective models and the protocol parameters.
#[derive(Debug, Clone)]
pub struct CentaurConfig {
    pub otm: Arc<TabularModel>,
    pub stm_m: SubjectiveTaskModel,
    pub stm_h: SubjectiveTaskModel,
    pub c_m: f64,
    pub horizon: usize,
    pub start_state: usize,
}

impl CentaurConfig {
    pub fn validate(&self) -> Result<()> {
        let same = |m: &TabularModel| {
            m.n_states() == self.otm.n_states()
                && m.n_actions() == self.otm.n_actions()
                && m.n_observations() == self.otm.n_observations()
        };
        if !same(self.stm_m.model()) || !same(self.stm_h.model()) {
            return Err(Error::InvalidModel("task models do not share state/action/observation spaces".into()));
        }
        if !(self.c_m >= 0.0) {
            return Err(Error::InvalidModel("machine override cost must be non-negative".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidSpec("horizon must be at least 1".into()));
        }
        self.otm.check_state(self.start_state)
    }
}

/// Environment-side state of an episode in progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimState {
    pub state: usize,
    pub t: usize,
    pub done: bool,
}

impl SimState {
    pub fn start(cfg: &CentaurConfig) -> Self {
        Self { state: cfg.start_state, t: 0, done: cfg.otm.is_terminal(cfg.start_state) }
    }
}

/// One round: the human answers `a_m`, the objective model moves the world
/// with the centaur action, and both rewards are booked. `u_next` and `u_obs`
/// are the uniforms driving the transition and observation draws; taking them
/// from outside keeps the environment's randomness independent of the agents'.
pub fn protocol_step(
    cfg: &CentaurConfig,
    sim: SimState,
    a_m: usize,
    human: &mut MoHState,
    u_next: f64,
    u_obs: f64,
) -> Result<(StepRecord, SimState)> {
    if sim.done {
        return Err(Error::EpisodeTerminated);
    }
    cfg.otm.check_action(a_m)?;
    let s = sim.state;
    let a_h = moh_respond(&cfg.stm_h, human, a_m)?;
    let a_c = centaur_action(a_m, a_h);
    let overridden = a_h.is_override();
    let c_h = cfg.stm_h.override_cost().expected(human.belief.probs());
    let r_m = cfg.otm.r(s, a_c) - if overridden { cfg.c_m } else { 0.0 };
    let r_h = cfg.stm_h.model().r(s, a_c) - if overridden { c_h } else { 0.0 };
    let next = cfg.otm.sample_next(a_c, s, u_next);
    let o = match cfg.otm.observation_row(a_c, next) {
        Some(row) => sample_index(row, u_obs),
        None => next,
    };
    *human = moh_belief_step(&cfg.stm_h, human, a_c, o)?;
    let record = StepRecord { t: sim.t, state: s, a_m, a_h, a_c, r_m, r_h, o, next_state: next };
    let t = sim.t + 1;
    let done = cfg.otm.is_terminal(next) || t >= cfg.horizon;
    Ok((record, SimState { state: next, t, done }))
}

/// Anything that proposes machine actions during an episode.
pub trait MachineAgent {
    /// Called once before the first step of each episode.
    fn begin_episode(&mut self, _start: usize) -> Result<()> {
        Ok(())
    }

    fn propose(&mut self, state: usize, t: usize) -> Result<usize>;

    /// Sees the full record after each round (proposal, response, outcome).
    fn observe(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }
}

/// A machine that executes a fixed policy and ignores the human.
#[derive(Debug, Clone)]
pub struct FixedPolicyMachine {
    pub policy: Policy,
}

impl MachineAgent for FixedPolicyMachine {
    fn propose(&mut self, state: usize, _t: usize) -> Result<usize> {
        Ok(self.policy.action(state))
    }
}

/// Plays one episode. The environment's uniforms come from a ChaCha stream
/// seeded with `seed` and two are drawn every step whatever the agents do, so
/// arms run with the same seed see the same random outcomes.
pub fn run_episode(cfg: &CentaurConfig, machine: &mut dyn MachineAgent, seed: u64) -> Result<Vec<StepRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sim = SimState::start(cfg);
    let mut human = MoHState::new(BeliefState::point(cfg.otm.n_states(), cfg.start_state));
    let mut log = Vec::new();
    machine.begin_episode(cfg.start_state)?;
    while !sim.done {
        let (u_next, u_obs) = (rng.gen::<f64>(), rng.gen::<f64>());
        let a_m = machine.propose(sim.state, sim.t)?;
        let (record, next) = protocol_step(cfg, sim, a_m, &mut human, u_next, u_obs)?;
        machine.observe(&record)?;
        log.push(record);
        sim = next;
    }
    Ok(log)
}

pub fn episode_return(log: &[StepRecord]) -> f64 {
    log.iter().map(|r| r.r_m).sum()
}

/// Episode log as CSV: `t,state,a_m,a_h,a_c,r_m,r_h,overridden`, with `a_h`
/// written as `noop` or the override action.
pub fn write_episode_csv<W: Write>(log: &[StepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "state", "a_m", "a_h", "a_c", "r_m", "r_h", "overridden"])?;
    for r in log {
        let a_h = match r.a_h {
            HumanResponse::Noop => "noop".to_string(),
            HumanResponse::Override(a) => a.to_string(),
        };
        w.write_record([
            r.t.to_string(),
            r.state.to_string(),
            r.a_m.to_string(),
            a_h,
            r.a_c.to_string(),
            r.r_m.to_string(),
            r.r_h.to_string(),
            r.overridden().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
