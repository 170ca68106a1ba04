//! The machine-optimistic human (MoH).
//!
//! The human solves their own subjective task model (STM) and, assuming the
//! machine will act like them from the next step on, overrides a proposal
//! `a_m` exactly when `V(b) − Q(b, a_m) > E_b[c_h]`. The override action is the
//! human's own greedy action.

mod oracle;

pub use oracle::{brm_oracle_solve, OracleTable, MAX_ORACLE_AUGMENTED_STATES, MAX_ORACLE_HORIZON};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::belief::{belief_update, BeliefState};
use crate::error::{Error, Result};
use crate::model::TabularModel;
use crate::solvers::{argmax, finite_horizon_q, greedy_policy, hyperbolic_q, value_iteration, DiscountSpec, Policy, QTable, DEFAULT_TOL};

/// Slack applied to the strict override inequality so that floating-point
/// noise on exact ties still resolves to noop.
pub const GAP_TOL: f64 = 1e-9;

/// λ-grid size used when an STM with a hyperbolic criterion solves itself.
pub const DEFAULT_HYPERBOLIC_GRID: usize = 101;

/// Per-override effort cost. Experiments only use constants; the per-state
/// form is kept for models whose cost depends on where the override happens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OverrideCost {
    Constant(f64),
    PerState(Vec<f64>),
}

impl OverrideCost {
    /// `E_b[c_h]`.
    pub fn expected(&self, belief: &[f64]) -> f64 {
        match self {
            OverrideCost::Constant(c) => *c,
            OverrideCost::PerState(c) => belief.iter().zip(c).map(|(b, c)| if *b == 0.0 { 0.0 } else { b * c }).sum(),
        }
    }

    pub fn at_state(&self, s: usize) -> f64 {
        match self {
            OverrideCost::Constant(c) => *c,
            OverrideCost::PerState(c) => c[s],
        }
    }
}

/// An agent's surrogate model of the task together with its optimality
/// criterion and override cost. The model and the solved Q-table sit behind
/// `Arc` so that many particles can share one solve.
#[derive(Debug, Clone)]
pub struct SubjectiveTaskModel {
    model: Arc<TabularModel>,
    criterion: DiscountSpec,
    override_cost: OverrideCost,
    solved: Option<Arc<QTable>>,
}

impl SubjectiveTaskModel {
    pub fn new(model: Arc<TabularModel>, criterion: DiscountSpec, override_cost: f64) -> Result<Self> {
        Self::with_cost(model, criterion, OverrideCost::Constant(override_cost))
    }

    pub fn with_cost(model: Arc<TabularModel>, criterion: DiscountSpec, override_cost: OverrideCost) -> Result<Self> {
        let ok = match &override_cost {
            OverrideCost::Constant(c) => *c >= 0.0,
            OverrideCost::PerState(c) => c.len() == model.n_states() && c.iter().all(|&x| x >= 0.0),
        };
        if !ok {
            return Err(Error::InvalidModel("override cost must be non-negative".into()));
        }
        Ok(Self { model, criterion, override_cost, solved: None })
    }

    pub fn model(&self) -> &TabularModel {
        &self.model
    }

    pub fn model_arc(&self) -> &Arc<TabularModel> {
        &self.model
    }

    pub fn criterion(&self) -> DiscountSpec {
        self.criterion
    }

    pub fn override_cost(&self) -> &OverrideCost {
        &self.override_cost
    }

    pub fn is_solved(&self) -> bool {
        self.solved.is_some()
    }

    /// Solves the STM under its own criterion and caches the Q-table.
    pub fn solve(mut self) -> Result<Self> {
        let q = match self.criterion {
            DiscountSpec::Exponential { lambda } => value_iteration(&self.model, lambda, DEFAULT_TOL)?,
            DiscountSpec::Hyperbolic { gamma } => hyperbolic_q(&self.model, gamma, DEFAULT_HYPERBOLIC_GRID)?,
            DiscountSpec::Undiscounted { horizon } => finite_horizon_q(&self.model, horizon)?,
        };
        self.solved = Some(Arc::new(q));
        Ok(self)
    }

    /// Attaches a Q-table solved elsewhere (a cache or a sibling particle).
    pub fn with_solution(mut self, q: Arc<QTable>) -> Result<Self> {
        if q.n_states() != self.model.n_states() || q.n_actions() != self.model.n_actions() {
            return Err(Error::InvalidModel("cached Q-table does not match the model".into()));
        }
        if q.discount() != self.criterion {
            return Err(Error::InvalidModel("cached Q-table was solved under a different criterion".into()));
        }
        self.solved = Some(q);
        Ok(self)
    }

    /// Same model and solution, different override cost.
    pub fn with_override_cost(&self, c_h: f64) -> Result<Self> {
        let mut out = Self::new(self.model.clone(), self.criterion, c_h)?;
        out.solved = self.solved.clone();
        Ok(out)
    }

    pub fn q_table(&self) -> Result<&QTable> {
        self.solved.as_deref().ok_or(Error::UnsolvedStm)
    }

    pub fn q_table_arc(&self) -> Result<&Arc<QTable>> {
        self.solved.as_ref().ok_or(Error::UnsolvedStm)
    }

    pub fn policy(&self) -> Result<Policy> {
        Ok(greedy_policy(self.q_table()?))
    }

    /// Override decision at a fully observed state.
    pub fn respond_at_state(&self, s: usize, a_m: usize) -> Result<HumanResponse> {
        let q = self.q_table()?;
        self.model.check_state(s)?;
        self.model.check_action(a_m)?;
        let gap = q.gap(s, a_m);
        Ok(if gap - self.override_cost.at_state(s) > GAP_TOL {
            HumanResponse::Override(q.greedy_action(s))
        } else {
            HumanResponse::Noop
        })
    }
}

/// The human's reply to a machine proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanResponse {
    Noop,
    Override(usize),
}

impl HumanResponse {
    pub fn is_override(&self) -> bool {
        matches!(self, HumanResponse::Override(_))
    }

    /// Compact code: 0 for noop, `a + 1` for an override with `a`.
    pub fn code(&self) -> u16 {
        match self {
            HumanResponse::Noop => 0,
            HumanResponse::Override(a) => *a as u16 + 1,
        }
    }

    pub fn from_code(code: u16) -> Self {
        match code {
            0 => HumanResponse::Noop,
            c => HumanResponse::Override(c as usize - 1),
        }
    }
}

/// Internal state of the MoH: its belief, the last machine proposal and the
/// override bit computed for it.
#[derive(Debug, Clone, PartialEq)]
pub struct MoHState {
    pub belief: BeliefState,
    pub last_machine_action: Option<usize>,
    pub z: Option<bool>,
}

impl MoHState {
    pub fn new(belief: BeliefState) -> Self {
        Self { belief, last_machine_action: None, z: None }
    }

    /// Records a proposal together with the override bit it triggers.
    pub fn observe_machine(&mut self, stm: &SubjectiveTaskModel, a_m: usize) -> Result<()> {
        self.z = Some(override_indicator(stm, &self.belief, a_m)?);
        self.last_machine_action = Some(a_m);
        Ok(())
    }
}

fn belief_gap(stm: &SubjectiveTaskModel, belief: &BeliefState, a_m: usize) -> Result<(f64, usize)> {
    let q = stm.q_table()?;
    stm.model.check_action(a_m)?;
    if belief.len() != stm.model.n_states() {
        return Err(Error::InvalidBelief("belief length does not match the model".into()));
    }
    let row = match belief.as_point() {
        Some(s) => q.row(s).to_vec(),
        None => q.belief_row(belief.probs()),
    };
    let best = argmax(&row);
    Ok((row[best] - row[a_m], best))
}

/// `z(a_m)`: whether the human overrides `a_m` at `belief`. For non-degenerate
/// beliefs the Q-values are averaged over states.
pub fn override_indicator(stm: &SubjectiveTaskModel, belief: &BeliefState, a_m: usize) -> Result<bool> {
    let (gap, _) = belief_gap(stm, belief, a_m)?;
    Ok(gap - stm.override_cost.expected(belief.probs()) > GAP_TOL)
}

pub fn moh_respond(stm: &SubjectiveTaskModel, state: &MoHState, a_m: usize) -> Result<HumanResponse> {
    let (gap, best) = belief_gap(stm, &state.belief, a_m)?;
    Ok(if gap - stm.override_cost.expected(state.belief.probs()) > GAP_TOL {
        HumanResponse::Override(best)
    } else {
        HumanResponse::Noop
    })
}

/// Filters the human's belief with their own model after the centaur action
/// `a_c` produced observation `o`. When the STM is fully observable `o` is the
/// next state and the belief jumps to it, even if the human's dynamics called
/// that transition impossible.
pub fn moh_belief_step(stm: &SubjectiveTaskModel, state: &MoHState, a_c: usize, o: usize) -> Result<MoHState> {
    let belief = if stm.model.is_fully_observable() {
        stm.model.check_action(a_c)?;
        stm.model.check_state(o)?;
        BeliefState::point(stm.model.n_states(), o)
    } else {
        belief_update(&stm.model, &state.belief, a_c, o)?
    };
    Ok(MoHState::new(belief))
}

/// Responses to every proposal at every state of a fully observable STM,
/// stored as [`HumanResponse::code`] values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OverrideTable {
    n_actions: usize,
    codes: Vec<u16>,
}

impl OverrideTable {
    pub fn build(stm: &SubjectiveTaskModel) -> Result<Self> {
        if !stm.model.is_fully_observable() {
            return Err(Error::NotFullyObservable);
        }
        let na = stm.model.n_actions();
        let mut codes = Vec::with_capacity(stm.model.n_states() * na);
        for s in 0..stm.model.n_states() {
            for a in 0..na {
                codes.push(stm.respond_at_state(s, a)?.code());
            }
        }
        Ok(Self { n_actions: na, codes })
    }

    /// A human that never overrides.
    pub fn never(n_states: usize, n_actions: usize) -> Self {
        Self { n_actions, codes: vec![0; n_states * n_actions] }
    }

    #[inline]
    pub fn response(&self, s: usize, a_m: usize) -> HumanResponse {
        HumanResponse::from_code(self.codes[s * self.n_actions + a_m])
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn signature(&self, probe_states: &[usize]) -> Signature {
        let mut bytes = Vec::with_capacity(probe_states.len() * self.n_actions * 2);
        for &s in probe_states {
            for code in &self.codes[s * self.n_actions..(s + 1) * self.n_actions] {
                bytes.extend_from_slice(&code.to_le_bytes());
            }
        }
        Signature(bytes)
    }
}

/// Byte encoding of an override policy on a probe set. Equal signatures mean
/// identical responses on every probed `(state, a_m)` pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(pub Vec<u8>);

/// All non-terminal states.
pub fn default_probe_states(model: &TabularModel) -> Vec<usize> {
    (0..model.n_states()).filter(|&s| !model.is_terminal(s)).collect()
}

pub fn behavioural_signature(stm: &SubjectiveTaskModel, probe_states: &[usize]) -> Result<Signature> {
    if !stm.model.is_fully_observable() {
        return Err(Error::NotFullyObservable);
    }
    stm.q_table()?;
    for &s in probe_states {
        stm.model.check_state(s)?;
    }
    let na = stm.model.n_actions();
    let mut bytes = Vec::with_capacity(probe_states.len() * na * 2);
    for &s in probe_states {
        for a in 0..na {
            bytes.extend_from_slice(&stm.respond_at_state(s, a)?.code().to_le_bytes());
        }
    }
    Ok(Signature(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Arc<TabularModel> {
        // s0 --a0--> s1 (reward 0), s0 --a1--> stays (reward -1); s1 terminal
        let t = vec![
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        ];
        let r = vec![vec![0.0, -1.0], vec![0.0, 0.0]];
        Arc::new(TabularModel::from_mdp(t, r, vec![1]).unwrap())
    }

    fn stm(c: f64) -> SubjectiveTaskModel {
        SubjectiveTaskModel::new(chain(), DiscountSpec::Exponential { lambda: 0.9 }, c).unwrap().solve().unwrap()
    }

    #[test]
    fn greedy_proposal_is_allowed() {
        let h = stm(0.0);
        let st = MoHState::new(BeliefState::point(2, 0));
        assert_eq!(moh_respond(&h, &st, 0).unwrap(), HumanResponse::Noop);
    }

    #[test]
    fn overrides_with_greedy_action() {
        let h = stm(0.5);
        let st = MoHState::new(BeliefState::point(2, 0));
        assert_eq!(moh_respond(&h, &st, 1).unwrap(), HumanResponse::Override(0));
        assert_eq!(moh_respond(&stm(1.0), &st, 1).unwrap(), HumanResponse::Noop);
        assert!(!override_indicator(&stm(f64::INFINITY), &st.belief, 1).unwrap());
    }

    #[test]
    fn unsolved_stm_is_an_error() {
        let h = SubjectiveTaskModel::new(chain(), DiscountSpec::Exponential { lambda: 0.9 }, 0.1).unwrap();
        let st = MoHState::new(BeliefState::point(2, 0));
        assert!(matches!(moh_respond(&h, &st, 0), Err(Error::UnsolvedStm)));
    }

    #[test]
    fn belief_step_fully_observable_is_point_mass() {
        let h = stm(0.1);
        let st = MoHState::new(BeliefState::point(2, 0));
        let next = moh_belief_step(&h, &st, 0, 1).unwrap();
        assert_eq!(next.belief.as_point(), Some(1));
    }

    #[test]
    fn observe_machine_records_indicator() {
        let h = stm(0.5);
        let mut st = MoHState::new(BeliefState::point(2, 0));
        st.observe_machine(&h, 1).unwrap();
        assert_eq!((st.last_machine_action, st.z), (Some(1), Some(true)));
    }

    #[test]
    fn signatures_ignore_costs_above_every_gap() {
        let probes = default_probe_states(&chain());
        let a = behavioural_signature(&stm(5.0), &probes).unwrap();
        let b = behavioural_signature(&stm(50.0), &probes).unwrap();
        assert_eq!(a, b);
        assert_eq!(OverrideTable::build(&stm(5.0)).unwrap().signature(&probes), a);
    }

    #[test]
    fn response_codes_round_trip() {
        for r in [HumanResponse::Noop, HumanResponse::Override(0), HumanResponse::Override(7)] {
            assert_eq!(HumanResponse::from_code(r.code()), r);
        }
    }
}
