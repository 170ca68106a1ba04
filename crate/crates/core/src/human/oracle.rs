//! Exact solve of the human's own best-response model on small MDPs.
//!
//! The augmented state is `(s, a_m)`; the human picks noop or any action,
//! pays `c_h` when overriding, and the machine's next proposal comes from a
//! fixed policy. Backward induction to the horizon gives the override decision
//! for every `(s, a_m)` without going through the closed-form MoH rule, which
//! makes it an independent check of that rule.

use super::{SubjectiveTaskModel, GAP_TOL};
use crate::error::{Error, Result};
use crate::solvers::{DiscountSpec, Policy};

pub const MAX_ORACLE_HORIZON: usize = 10;
pub const MAX_ORACLE_AUGMENTED_STATES: usize = 50;

/// Override decisions of the exact solve, indexed by `(state, a_m)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleTable {
    n_actions: usize,
    overrides: Vec<bool>,
}

impl OracleTable {
    pub fn overrides(&self, s: usize, a_m: usize) -> bool {
        self.overrides[s * self.n_actions + a_m]
    }
}

/// At depth 0 the human falls back on their STM's Q-values, which assume the
/// machine follows the human's optimal policy afterwards. With
/// `machine_policy = π*_h` the result then matches the closed-form rule for
/// any horizon.
pub fn brm_oracle_solve(stm_h: &SubjectiveTaskModel, machine_policy: &Policy, horizon: usize) -> Result<OracleTable> {
    let m = stm_h.model();
    let (n, na) = (m.n_states(), m.n_actions());
    if horizon == 0 || horizon > MAX_ORACLE_HORIZON {
        return Err(Error::ModelTooLarge(format!("horizon {horizon} outside 1..={MAX_ORACLE_HORIZON}")));
    }
    if n * na > MAX_ORACLE_AUGMENTED_STATES {
        return Err(Error::ModelTooLarge(format!(
            "{} augmented states (max {MAX_ORACLE_AUGMENTED_STATES})",
            n * na
        )));
    }
    if !m.is_fully_observable() {
        return Err(Error::NotFullyObservable);
    }
    if machine_policy.len() != n {
        return Err(Error::InvalidModel("machine policy length does not match the model".into()));
    }
    let lambda = match stm_h.criterion() {
        DiscountSpec::Exponential { lambda } => lambda,
        DiscountSpec::Undiscounted { .. } => 1.0,
        DiscountSpec::Hyperbolic { .. } => {
            return Err(Error::InvalidModel("the exact oracle needs a time-consistent criterion".into()))
        }
    };
    let q = stm_h.q_table()?;
    let cost = |s: usize| stm_h.override_cost().at_state(s);

    // w[s * na + a_m]: value of the augmented state at the current depth.
    let mut w: Vec<f64> = (0..n)
        .flat_map(|s| (0..na).map(move |a| (s, a)))
        .map(|(s, a)| q.q(s, a).max(q.value(s) - cost(s)))
        .collect();
    let mut decisions = vec![false; n * na];
    for _ in 0..horizon {
        // Value of executing a_c at s, with the continuation given by w.
        let exec: Vec<f64> = (0..n)
            .flat_map(|s| (0..na).map(move |a| (s, a)))
            .map(|(s, a)| {
                let cont: f64 = m
                    .transition_row(a, s)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(s2, &p)| p * w[s2 * na + machine_policy.action(s2)])
                    .sum();
                m.r(s, a) + lambda * cont
            })
            .collect();
        let mut next = vec![0.0; n * na];
        for s in 0..n {
            let best_override = exec[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max) - cost(s);
            for a_m in 0..na {
                let noop = exec[s * na + a_m];
                decisions[s * na + a_m] = best_override - noop > GAP_TOL;
                next[s * na + a_m] = noop.max(best_override);
            }
        }
        w = next;
    }
    Ok(OracleTable { n_actions: na, overrides: decisions })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::TabularModel;

    #[test]
    fn rejects_large_models() {
        let n = 20;
        let t = vec![(0..n).map(|s| (0..n).map(|j| if j == s { 1.0 } else { 0.0 }).collect()).collect(); 3];
        let m = Arc::new(TabularModel::from_mdp(t, vec![vec![0.0; 3]; n], vec![]).unwrap());
        let stm = SubjectiveTaskModel::new(m, DiscountSpec::Exponential { lambda: 0.9 }, 0.1).unwrap().solve().unwrap();
        let p = stm.policy().unwrap();
        assert!(matches!(brm_oracle_solve(&stm, &p, 3), Err(Error::ModelTooLarge(_))));
    }
}
