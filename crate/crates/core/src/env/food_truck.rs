//! Food Truck: a deterministic street grid with restaurants.
//!
//! Entering a restaurant cell puts the agent in that restaurant's entry
//! state; the next step moves it to the exit state and the one after that to
//! a shared absorbing terminal, whatever the action. Every step costs
//! `step_cost` on top of the entry/exit rewards.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TabularModel;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const N_ACTIONS: usize = 4;

const MOVES: [(isize, isize); N_ACTIONS] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// The layout shipped with the crate and pinned by the acceptance suite.
pub const DEFAULT_LAYOUT_JSON: &str = include_str!("../../data/food_truck_layout.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restaurant {
    Vegan,
    Doughnut,
    Noodle,
}

/// Entry and exit rewards of one restaurant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRewards {
    pub entry: f64,
    pub exit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestaurantRewards {
    pub vegan: ChainRewards,
    pub doughnut: ChainRewards,
    pub noodle: ChainRewards,
}

impl Default for RestaurantRewards {
    fn default() -> Self {
        Self {
            vegan: ChainRewards { entry: -10.0, exit: 20.0 },
            doughnut: ChainRewards { entry: 10.0, exit: -10.0 },
            // Least preferred: nothing gained, and the payoff comes last.
            noodle: ChainRewards { entry: -5.0, exit: 5.0 },
        }
    }
}

impl RestaurantRewards {
    pub fn get(&self, kind: Restaurant) -> ChainRewards {
        match kind {
            Restaurant::Vegan => self.vegan,
            Restaurant::Doughnut => self.doughnut,
            Restaurant::Noodle => self.noodle,
        }
    }
}

fn default_step_cost() -> f64 {
    0.1
}

/// Grid rows, one character per cell: `.` street, `#` wall, `S` start (a
/// street cell), `V` vegan, `D` doughnut, `N` noodle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodTruckLayout {
    pub grid: Vec<String>,
    #[serde(default = "default_step_cost")]
    pub step_cost: f64,
    #[serde(default)]
    pub rewards: RestaurantRewards,
}

impl FoodTruckLayout {
    pub fn default_layout() -> Self {
        serde_json::from_str(DEFAULT_LAYOUT_JSON).expect("shipped layout parses")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// What a model state stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruckState {
    Street { row: usize, col: usize },
    Entry { kind: Restaurant, row: usize, col: usize },
    Exit { kind: Restaurant, row: usize, col: usize },
    Terminal,
}

/// A built Food Truck task with the bookkeeping needed by heuristics and
/// reports.
#[derive(Debug, Clone)]
pub struct FoodTruck {
    pub model: TabularModel,
    pub start: usize,
    pub states: Vec<TruckState>,
    pub layout: FoodTruckLayout,
    /// Moves needed from each state to enter the nearest vegan restaurant
    /// (`None` for chain states and cells that cannot reach one).
    pub vegan_distance: Vec<Option<usize>>,
}

impl FoodTruck {
    pub fn describe(&self, s: usize) -> String {
        match self.states[s] {
            TruckState::Street { row, col } => format!("({row},{col})"),
            TruckState::Entry { kind, .. } => format!("{kind:?}-entry"),
            TruckState::Exit { kind, .. } => format!("{kind:?}-exit"),
            TruckState::Terminal => "terminal".into(),
        }
    }

    /// Restaurant whose chain the state sequence enters, if any.
    pub fn restaurant_of(&self, s: usize) -> Option<Restaurant> {
        match self.states[s] {
            TruckState::Entry { kind, .. } | TruckState::Exit { kind, .. } => Some(kind),
            _ => None,
        }
    }

    /// Deterministic successor.
    pub fn next(&self, s: usize, a: usize) -> usize {
        let row = self.model.transition_row(a, s);
        row.iter().position(|&p| p == 1.0).expect("Food Truck moves are deterministic")
    }
}

pub fn build_food_truck(layout: &FoodTruckLayout) -> Result<FoodTruck> {
    let h = layout.grid.len();
    if h == 0 {
        return Err(Error::InvalidLayout("empty grid".into()));
    }
    let cells: Vec<Vec<char>> = layout.grid.iter().map(|r| r.chars().collect()).collect();
    let w = cells[0].len();
    if w == 0 || cells.iter().any(|r| r.len() != w) {
        return Err(Error::InvalidLayout("rows must be non-empty and of equal length".into()));
    }
    if !(layout.step_cost >= 0.0) {
        return Err(Error::InvalidLayout("step cost must be non-negative".into()));
    }

    let mut states = Vec::new();
    let mut cell_state = vec![vec![usize::MAX; w]; h];
    let mut start = None;
    for (r, row) in cells.iter().enumerate() {
        for (c, &ch) in row.iter().enumerate() {
            let st = match ch {
                '.' => TruckState::Street { row: r, col: c },
                'S' => {
                    if start.is_some() {
                        return Err(Error::InvalidLayout("more than one start cell".into()));
                    }
                    start = Some(states.len());
                    TruckState::Street { row: r, col: c }
                }
                'V' => TruckState::Entry { kind: Restaurant::Vegan, row: r, col: c },
                'D' => TruckState::Entry { kind: Restaurant::Doughnut, row: r, col: c },
                'N' => TruckState::Entry { kind: Restaurant::Noodle, row: r, col: c },
                '#' => continue,
                other => return Err(Error::InvalidLayout(format!("unknown cell `{other}`"))),
            };
            cell_state[r][c] = states.len();
            states.push(st);
        }
    }
    let start = start.ok_or_else(|| Error::InvalidLayout("no start cell".into()))?;
    let entries: Vec<usize> = (0..states.len()).filter(|&s| matches!(states[s], TruckState::Entry { .. })).collect();
    if !entries.iter().any(|&s| matches!(states[s], TruckState::Entry { kind: Restaurant::Vegan, .. })) {
        return Err(Error::InvalidLayout("no vegan restaurant".into()));
    }
    let mut exit_of = vec![usize::MAX; states.len()];
    for &e in &entries {
        if let TruckState::Entry { kind, row, col } = states[e] {
            exit_of[e] = states.len();
            states.push(TruckState::Exit { kind, row, col });
        }
    }
    let terminal = states.len();
    states.push(TruckState::Terminal);
    let n = states.len();

    let step = |r: usize, c: usize, a: usize| -> usize {
        let (dr, dc) = MOVES[a];
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
            return cell_state[r][c];
        }
        let target = cell_state[nr as usize][nc as usize];
        if target == usize::MAX {
            cell_state[r][c]
        } else {
            target
        }
    };

    let mut transition = vec![0.0; N_ACTIONS * n * n];
    let mut reward = vec![0.0; n * N_ACTIONS];
    for s in 0..n {
        for a in 0..N_ACTIONS {
            let (next, r) = match states[s] {
                TruckState::Street { row, col } => (step(row, col, a), -layout.step_cost),
                TruckState::Entry { kind, .. } => (exit_of[s], layout.rewards.get(kind).entry - layout.step_cost),
                TruckState::Exit { kind, .. } => (terminal, layout.rewards.get(kind).exit - layout.step_cost),
                TruckState::Terminal => (terminal, 0.0),
            };
            transition[(a * n + s) * n + next] = 1.0;
            reward[s * N_ACTIONS + a] = r;
        }
    }
    let model = TabularModel::new(n, N_ACTIONS, 0, transition, None, reward, vec![terminal])?;

    // Every restaurant must be reachable from the start.
    let dist_from_start = bfs(&model, &[start], false);
    if entries.iter().any(|&e| dist_from_start[e].is_none()) {
        return Err(Error::InvalidLayout("a restaurant cannot be reached from the start".into()));
    }
    let vegan_entries: Vec<usize> = entries
        .iter()
        .copied()
        .filter(|&e| matches!(states[e], TruckState::Entry { kind: Restaurant::Vegan, .. }))
        .collect();
    let to_vegan = bfs(&model, &vegan_entries, true);
    let vegan_distance = (0..n)
        .map(|s| match states[s] {
            TruckState::Street { .. } => to_vegan[s],
            TruckState::Entry { kind: Restaurant::Vegan, .. } => Some(0),
            _ => None,
        })
        .collect();
    Ok(FoodTruck { model, start, states, layout: layout.clone(), vegan_distance })
}

/// Breadth-first move counts over street moves. With `reverse`, counts how
/// many moves each state needs to reach one of `sources`.
fn bfs(model: &TabularModel, sources: &[usize], reverse: bool) -> Vec<Option<usize>> {
    let n = model.n_states();
    let mut succ = vec![Vec::new(); n];
    for s in 0..n {
        for a in 0..model.n_actions() {
            let next = model.transition_row(a, s).iter().position(|&p| p == 1.0).unwrap();
            if next != s {
                if reverse {
                    succ[next].push(s);
                } else {
                    succ[s].push(next);
                }
            }
        }
    }
    let mut dist = vec![None; n];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = Some(0);
        queue.push_back(s);
    }
    while let Some(s) = queue.pop_front() {
        let d = dist[s].unwrap();
        for &p in &succ[s] {
            if dist[p].is_none() {
                dist[p] = Some(d + 1);
                queue.push_back(p);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FoodTruckLayout {
        FoodTruckLayout {
            grid: vec!["S..V".into(), ".#D.".into()],
            step_cost: 0.1,
            rewards: RestaurantRewards::default(),
        }
    }

    #[test]
    fn chain_runs_regardless_of_action() {
        let ft = build_food_truck(&tiny()).unwrap();
        let v = (0..ft.states.len())
            .find(|&s| matches!(ft.states[s], TruckState::Entry { kind: Restaurant::Vegan, .. }))
            .unwrap();
        let exits: Vec<usize> = (0..N_ACTIONS).map(|a| ft.next(v, a)).collect();
        assert!(exits.iter().all(|&e| e == exits[0]));
        assert!(ft.model.is_terminal(ft.next(exits[0], UP)));
        assert!((ft.model.r(v, UP) + 10.1).abs() < 1e-12);
        assert!((ft.model.r(exits[0], LEFT) - 19.9).abs() < 1e-12);
    }

    #[test]
    fn walls_and_edges_block() {
        let ft = build_food_truck(&tiny()).unwrap();
        assert_eq!(ft.next(ft.start, UP), ft.start);
        assert_eq!(ft.next(ft.start, LEFT), ft.start);
        assert_eq!(ft.vegan_distance[ft.start], Some(3));
    }

    #[test]
    fn invalid_layouts() {
        let mut l = tiny();
        l.grid = vec!["####".into(), "####".into()];
        assert!(matches!(build_food_truck(&l), Err(Error::InvalidLayout(_))));
        l.grid = vec!["S#V".into()];
        assert!(matches!(build_food_truck(&l), Err(Error::InvalidLayout(_))));
        l.grid = vec!["S.x".into()];
        assert!(build_food_truck(&l).is_err());
    }
}
