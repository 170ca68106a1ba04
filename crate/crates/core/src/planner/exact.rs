//! Exact machine best response to a known, tabulated human.
//!
//! With the human's responses fixed per `(s, a_m)`, the machine faces an
//! ordinary MDP whose action `a_m` executes `a_c(a_m, response)`. Value
//! iteration on that MDP is the reference the search approximates.

use crate::env::centaur_action;
use crate::error::{Error, Result};
use crate::human::OverrideTable;
use crate::model::TabularModel;
use crate::solvers::{value_iteration, QTable};

/// The MDP the machine controls when the human answers with `table`.
pub fn induced_machine_mdp(machine: &TabularModel, table: &OverrideTable, c_m: f64) -> Result<TabularModel> {
    if !machine.is_fully_observable() {
        return Err(Error::NotFullyObservable);
    }
    let (n, na) = (machine.n_states(), machine.n_actions());
    if table.n_actions() != na {
        return Err(Error::InvalidModel("override table does not match the machine's action space".into()));
    }
    let mut transition = vec![0.0; na * n * n];
    let mut reward = vec![0.0; n * na];
    for s in 0..n {
        for a in 0..na {
            let resp = table.response(s, a);
            let a_c = centaur_action(a, resp);
            transition[(a * n + s) * n..(a * n + s + 1) * n].copy_from_slice(machine.transition_row(a_c, s));
            reward[s * na + a] = machine.r(s, a_c) - if resp.is_override() { c_m } else { 0.0 };
        }
    }
    TabularModel::new(n, na, 0, transition, None, reward, machine.terminal_states().to_vec())
}

/// Q-values over proposals of the machine's optimal response.
pub fn best_response_q(machine: &TabularModel, table: &OverrideTable, c_m: f64, lambda: f64, tol: f64) -> Result<QTable> {
    value_iteration(&induced_machine_mdp(machine, table, c_m)?, lambda, tol)
}
