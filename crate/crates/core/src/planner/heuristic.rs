//! Leaf evaluations for the search.

use crate::env::{FoodTruck, Restaurant, TruckState};
use crate::error::{Error, Result};
use crate::model::TabularModel;
use crate::solvers::{value_iteration, DEFAULT_TOL};

pub const HEURISTIC_NAMES: [&str; 3] = ["vegan_distance", "machine_q", "none"];

/// What a heuristic may look at.
#[derive(Debug, Clone, Copy)]
pub enum HeuristicContext<'a> {
    FoodTruck { truck: &'a FoodTruck, lambda: f64 },
    Model { model: &'a TabularModel, lambda: f64 },
}

impl HeuristicContext<'_> {
    fn model(&self) -> &TabularModel {
        match self {
            HeuristicContext::FoodTruck { truck, .. } => &truck.model,
            HeuristicContext::Model { model, .. } => model,
        }
    }

    fn lambda(&self) -> f64 {
        match *self {
            HeuristicContext::FoodTruck { lambda, .. } | HeuristicContext::Model { lambda, .. } => lambda,
        }
    }
}

/// Leaf values for every state.
///
/// * `vegan_distance` (Food Truck only): walk the shortest street path to the
///   vegan restaurant paying the step cost, then collect its entry and exit
///   rewards, all discounted by λ. Chain states get their remaining chain
///   reward; streets with no way to the vegan restaurant get 0.
/// * `machine_q`: `max_a Q*(s, a)` of the machine's model under λ.
/// * `none`: 0 everywhere.
pub fn heuristic_values(name: &str, ctx: &HeuristicContext) -> Result<Vec<f64>> {
    match name {
        "none" => Ok(vec![0.0; ctx.model().n_states()]),
        "machine_q" => {
            let q = value_iteration(ctx.model(), ctx.lambda(), DEFAULT_TOL)?;
            Ok((0..q.n_states()).map(|s| q.value(s)).collect())
        }
        "vegan_distance" => match ctx {
            HeuristicContext::FoodTruck { truck, lambda } => Ok(vegan_distance_values(truck, *lambda)),
            HeuristicContext::Model { .. } => {
                Err(Error::InvalidSpec("the vegan_distance heuristic needs a Food Truck task".into()))
            }
        },
        other => Err(Error::UnknownHeuristic(other.to_string())),
    }
}

/// Single-state form of [`heuristic_values`].
pub fn rollout_heuristic_value(name: &str, state: usize, ctx: &HeuristicContext) -> Result<f64> {
    ctx.model().check_state(state)?;
    Ok(heuristic_values(name, ctx)?[state])
}

fn vegan_distance_values(truck: &FoodTruck, lambda: f64) -> Vec<f64> {
    let step = truck.layout.step_cost;
    let rewards = &truck.layout.rewards;
    let vegan = rewards.get(Restaurant::Vegan);
    let vegan_chain = (vegan.entry - step) + lambda * (vegan.exit - step);
    truck
        .states
        .iter()
        .enumerate()
        .map(|(s, st)| match *st {
            TruckState::Street { .. } => match truck.vegan_distance[s] {
                Some(d) => {
                    let walk: f64 = (0..d).map(|t| -step * lambda.powi(t as i32)).sum();
                    walk + lambda.powi(d as i32) * vegan_chain
                }
                None => 0.0,
            },
            TruckState::Entry { kind, .. } => {
                let r = rewards.get(kind);
                (r.entry - step) + lambda * (r.exit - step)
            }
            TruckState::Exit { kind, .. } => rewards.get(kind).exit - step,
            TruckState::Terminal => 0.0,
        })
        .collect()
}
