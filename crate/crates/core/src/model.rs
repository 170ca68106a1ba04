//! Finite MDP/POMDP tables.
//!
//! A [`TabularModel`] stores dense transition, observation and reward tables.
//! Transition rows are indexed `[action][state][next_state]`, observation rows
//! `[action][next_state][observation]`, rewards `[state][action]`. A model with
//! zero observations is fully observable: the observation after a step is the
//! next state itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums must match 1 within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct TabularModel {
    n_states: usize,
    n_actions: usize,
    n_observations: usize,
    transition: Vec<f64>,
    observation: Option<Vec<f64>>,
    reward: Vec<f64>,
    terminal: Vec<usize>,
    is_terminal: Vec<bool>,
}

/// JSON document layout with nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawModel {
    n_states: usize,
    n_actions: usize,
    #[serde(default)]
    n_observations: usize,
    transition: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    observation: Option<Vec<Vec<Vec<f64>>>>,
    reward: Vec<Vec<f64>>,
    #[serde(default)]
    terminal: Vec<usize>,
}

impl TryFrom<RawModel> for TabularModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        let flatten3 = |name: &str, t: Vec<Vec<Vec<f64>>>, d0: usize, d1: usize, d2: usize| {
            if t.len() != d0 || t.iter().any(|m| m.len() != d1 || m.iter().any(|r| r.len() != d2)) {
                return Err(Error::InvalidModel(format!("{name} has wrong shape")));
            }
            Ok(t.into_iter().flatten().flatten().collect::<Vec<_>>())
        };
        let transition = flatten3(
            "transition",
            raw.transition,
            raw.n_actions,
            raw.n_states,
            raw.n_states,
        )?;
        let observation = match raw.observation {
            Some(o) if raw.n_observations > 0 => Some(flatten3(
                "observation",
                o,
                raw.n_actions,
                raw.n_states,
                raw.n_observations,
            )?),
            Some(_) => {
                return Err(Error::InvalidModel(
                    "observation table given but n_observations = 0".into(),
                ))
            }
            None if raw.n_observations > 0 => {
                return Err(Error::InvalidModel("missing observation table".into()))
            }
            None => None,
        };
        if raw.reward.len() != raw.n_states || raw.reward.iter().any(|r| r.len() != raw.n_actions) {
            return Err(Error::InvalidModel("reward has wrong shape".into()));
        }
        let reward = raw.reward.into_iter().flatten().collect();
        TabularModel::new(
            raw.n_states,
            raw.n_actions,
            raw.n_observations,
            transition,
            observation,
            reward,
            raw.terminal,
        )
    }
}

impl From<TabularModel> for RawModel {
    fn from(m: TabularModel) -> Self {
        let transition = (0..m.n_actions)
            .map(|a| (0..m.n_states).map(|s| m.transition_row(a, s).to_vec()).collect())
            .collect();
        let observation = m.observation.as_ref().map(|_| {
            (0..m.n_actions)
                .map(|a| {
                    (0..m.n_states)
                        .map(|s| m.observation_row(a, s).unwrap().to_vec())
                        .collect()
                })
                .collect()
        });
        let reward = (0..m.n_states)
            .map(|s| m.reward[s * m.n_actions..(s + 1) * m.n_actions].to_vec())
            .collect();
        RawModel {
            n_states: m.n_states,
            n_actions: m.n_actions,
            n_observations: m.n_observations,
            transition,
            observation,
            reward,
            terminal: m.terminal,
        }
    }
}

fn check_row(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidModel(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {sum}")));
    }
    Ok(())
}

impl TabularModel {
    /// Builds a model from flat tables, checking every invariant.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        n_observations: usize,
        transition: Vec<f64>,
        observation: Option<Vec<f64>>,
        reward: Vec<f64>,
        mut terminal: Vec<usize>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidModel("empty state or action space".into()));
        }
        if transition.len() != n_actions * n_states * n_states {
            return Err(Error::InvalidModel("transition table has wrong length".into()));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::InvalidModel("reward table has wrong length".into()));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidModel("non-finite reward".into()));
        }
        for a in 0..n_actions {
            for s in 0..n_states {
                let off = (a * n_states + s) * n_states;
                check_row(&transition[off..off + n_states], &format!("T(.|s={s},a={a})"))?;
            }
        }
        match (&observation, n_observations) {
            (None, 0) => {}
            (Some(o), n) if n > 0 => {
                if o.len() != n_actions * n_states * n {
                    return Err(Error::InvalidModel("observation table has wrong length".into()));
                }
                for a in 0..n_actions {
                    for s in 0..n_states {
                        let off = (a * n_states + s) * n;
                        check_row(&o[off..off + n], &format!("O(.|s'={s},a={a})"))?;
                    }
                }
            }
            _ => {
                return Err(Error::InvalidModel(
                    "observation table inconsistent with n_observations".into(),
                ))
            }
        }
        terminal.sort_unstable();
        terminal.dedup();
        let mut is_terminal = vec![false; n_states];
        for &t in &terminal {
            if t >= n_states {
                return Err(Error::InvalidModel(format!("terminal state {t} out of range")));
            }
            is_terminal[t] = true;
            for a in 0..n_actions {
                let p = transition[(a * n_states + t) * n_states + t];
                if (p - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidModel(format!("terminal state {t} does not self-loop")));
                }
                if reward[t * n_actions + a] != 0.0 {
                    return Err(Error::InvalidModel(format!("terminal state {t} has nonzero reward")));
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            n_observations,
            transition,
            observation,
            reward,
            terminal,
            is_terminal,
        })
    }

    /// Fully observable model from nested per-action transition matrices.
    pub fn from_mdp(transition: Vec<Vec<Vec<f64>>>, reward: Vec<Vec<f64>>, terminal: Vec<usize>) -> Result<Self> {
        let n_actions = transition.len();
        let n_states = reward.len();
        RawModel {
            n_states,
            n_actions,
            n_observations: 0,
            transition,
            observation: None,
            reward,
            terminal,
        }
        .try_into()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_observations(&self) -> usize {
        self.n_observations
    }

    pub fn is_fully_observable(&self) -> bool {
        self.n_observations == 0
    }

    pub fn terminal_states(&self) -> &[usize] {
        &self.terminal
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.is_terminal[s]
    }

    pub fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.n_actions {
            return Err(Error::InvalidAction { action: a, n_actions: self.n_actions });
        }
        Ok(())
    }

    pub fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::IndexOutOfRange(format!("state {s} (n_states = {})", self.n_states)));
        }
        Ok(())
    }

    #[inline]
    pub fn transition_row(&self, a: usize, s: usize) -> &[f64] {
        let off = (a * self.n_states + s) * self.n_states;
        &self.transition[off..off + self.n_states]
    }

    #[inline]
    pub fn t(&self, a: usize, s: usize, next: usize) -> f64 {
        self.transition[(a * self.n_states + s) * self.n_states + next]
    }

    pub fn observation_row(&self, a: usize, next: usize) -> Option<&[f64]> {
        self.observation.as_ref().map(|o| {
            let off = (a * self.n_states + next) * self.n_observations;
            &o[off..off + self.n_observations]
        })
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn reward_row(&self, s: usize) -> &[f64] {
        &self.reward[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Per-action transition matrix `[s][s']`.
    pub fn transition_matrix(&self, a: usize) -> Vec<Vec<f64>> {
        (0..self.n_states).map(|s| self.transition_row(a, s).to_vec()).collect()
    }

    /// Per-action observation matrix `[s'][o]`, if partially observable.
    pub fn observation_matrix(&self, a: usize) -> Option<Vec<Vec<f64>>> {
        self.observation
            .as_ref()
            .map(|_| (0..self.n_states).map(|s| self.observation_row(a, s).unwrap().to_vec()).collect())
    }

    /// Samples a successor by inverting the CDF of `T(.|s,a)` at `u ∈ [0,1)`.
    pub fn sample_next(&self, a: usize, s: usize, u: f64) -> usize {
        sample_index(self.transition_row(a, s), u)
    }

    /// Same spaces, rewards and terminals; only the transition table differs.
    pub fn with_transition(&self, transition: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.n_observations,
            transition,
            self.observation.clone(),
            self.reward.clone(),
            self.terminal.clone(),
        )
    }

    pub fn transition_table(&self) -> &[f64] {
        &self.transition
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Inverse-CDF draw from a probability vector. Falls back to the last index
/// with positive mass when rounding leaves `u` past the cumulative total.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}
