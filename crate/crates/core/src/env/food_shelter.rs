//! Food Shelter: gather food on a small grid while keeping a shelter standing.
//!
//! A state is (agent cell, shelter intact?, food cell). Each step the agent
//! tries one of eight compass moves or stays; the attempt fails with the
//! action's noise probability, in which case the agent lands on a uniformly
//! chosen neighbouring cell. Arriving on the food eats it and food reappears
//! uniformly on another non-shelter cell. Arriving on the shelter rebuilds
//! it; otherwise a standing shelter collapses with a fixed probability. Each
//! step spent with the shelter down costs `collapse_cost`.
//!
//! Rewards are tabulated per `(s, a)`, so the food reward enters as its
//! expectation over where the move ends.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TabularModel;

pub const N_ACTIONS: usize = 9;
pub const STAY: usize = 8;

/// N, S, W, E, NE, NW, SE, SW, stay.
pub const MOVES: [(isize, isize); N_ACTIONS] =
    [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, 1), (-1, -1), (1, 1), (1, -1), (0, 0)];

/// Largest failure probability a model may hold. At exactly 1 every diagonal
/// becomes the same uniform hop and the choice between them is arbitrary;
/// keeping a sliver of success makes such a human act as the limit of
/// slightly smaller inflations.
pub const MAX_NOISE: f64 = 1.0 - 1e-6;

pub fn is_diagonal(a: usize) -> bool {
    (4..8).contains(&a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoodShelterConfig {
    pub width: usize,
    pub height: usize,
    /// `(row, col)`.
    pub shelter: (usize, usize),
    pub first_food: (usize, usize),
    pub collapse_prob: f64,
    pub food_reward: f64,
    pub collapse_cost: f64,
    pub step_cost: f64,
    pub base_noise: f64,
}

impl Default for FoodShelterConfig {
    fn default() -> Self {
        Self {
            width: 3,
            height: 3,
            shelter: (0, 0),
            first_food: (1, 1),
            collapse_prob: 0.1,
            food_reward: 1.0,
            collapse_cost: 0.1,
            step_cost: 0.0,
            base_noise: 0.1,
        }
    }
}

/// Index arithmetic for the (cell, shelter, food) product space.
#[derive(Debug, Clone)]
pub struct FoodShelterSpace {
    pub cfg: FoodShelterConfig,
    food_cells: Vec<usize>,
    food_index: Vec<Option<usize>>,
}

impl FoodShelterSpace {
    pub fn new(cfg: &FoodShelterConfig) -> Result<Self> {
        let n_cells = cfg.width * cfg.height;
        if n_cells < 3 {
            return Err(Error::InvalidLayout("grid needs at least three cells".into()));
        }
        let inside = |(r, c): (usize, usize)| r < cfg.height && c < cfg.width;
        if !inside(cfg.shelter) || !inside(cfg.first_food) || cfg.shelter == cfg.first_food {
            return Err(Error::InvalidLayout("shelter and first food must be distinct cells in the grid".into()));
        }
        for p in [cfg.collapse_prob, cfg.base_noise] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidLayout(format!("probability {p} outside [0, 1]")));
            }
        }
        let shelter = cfg.shelter.0 * cfg.width + cfg.shelter.1;
        let food_cells: Vec<usize> = (0..n_cells).filter(|&c| c != shelter).collect();
        let mut food_index = vec![None; n_cells];
        for (i, &c) in food_cells.iter().enumerate() {
            food_index[c] = Some(i);
        }
        Ok(Self { cfg: cfg.clone(), food_cells, food_index })
    }

    pub fn n_cells(&self) -> usize {
        self.cfg.width * self.cfg.height
    }

    pub fn n_states(&self) -> usize {
        self.n_cells() * 2 * self.food_cells.len()
    }

    pub fn shelter_cell(&self) -> usize {
        self.cfg.shelter.0 * self.cfg.width + self.cfg.shelter.1
    }

    pub fn encode(&self, agent: usize, intact: bool, food: usize) -> usize {
        let f = self.food_index[food].expect("food never sits on the shelter");
        (agent * 2 + usize::from(!intact)) * self.food_cells.len() + f
    }

    /// `(agent cell, shelter intact, food cell)`.
    pub fn decode(&self, s: usize) -> (usize, bool, usize) {
        let nf = self.food_cells.len();
        let f = self.food_cells[s % nf];
        let rest = s / nf;
        (rest / 2, rest.is_multiple_of(2), f)
    }

    pub fn start_state(&self) -> usize {
        let food = self.cfg.first_food.0 * self.cfg.width + self.cfg.first_food.1;
        self.encode(self.shelter_cell(), true, food)
    }

    fn neighbours(&self, cell: usize) -> Vec<usize> {
        let (w, h) = (self.cfg.width as isize, self.cfg.height as isize);
        let (r, c) = ((cell / self.cfg.width) as isize, (cell % self.cfg.width) as isize);
        MOVES[..8]
            .iter()
            .map(|(dr, dc)| (r + dr, c + dc))
            .filter(|&(nr, nc)| nr >= 0 && nc >= 0 && nr < h && nc < w)
            .map(|(nr, nc)| (nr * w + nc) as usize)
            .collect()
    }

    fn target(&self, cell: usize, a: usize) -> usize {
        let (w, h) = (self.cfg.width as isize, self.cfg.height as isize);
        let (r, c) = ((cell / self.cfg.width) as isize, (cell % self.cfg.width) as isize);
        let (nr, nc) = (r + MOVES[a].0, c + MOVES[a].1);
        if nr < 0 || nc < 0 || nr >= h || nc >= w {
            cell
        } else {
            (nr * w + nc) as usize
        }
    }

    /// Builds the model where action `a` fails with probability `noise[a]`.
    pub fn build(&self, noise: &[f64; N_ACTIONS]) -> Result<TabularModel> {
        let n = self.n_states();
        let cfg = &self.cfg;
        let shelter = self.shelter_cell();
        let mut transition = vec![0.0; N_ACTIONS * n * n];
        let mut reward = vec![0.0; n * N_ACTIONS];
        for s in 0..n {
            let (agent, intact, food) = self.decode(s);
            let nbrs = self.neighbours(agent);
            for (a, &eta) in noise.iter().enumerate() {
                // Distribution over the agent's landing cell.
                let mut land = vec![0.0; self.n_cells()];
                land[self.target(agent, a)] += 1.0 - eta;
                for &nb in &nbrs {
                    land[nb] += eta / nbrs.len() as f64;
                }
                let row = &mut transition[(a * n + s) * n..(a * n + s + 1) * n];
                let mut expected_food = 0.0;
                for (cell, &p) in land.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let shelter_outcomes: Vec<(bool, f64)> = if cell == shelter {
                        vec![(true, 1.0)]
                    } else if intact {
                        vec![(true, 1.0 - cfg.collapse_prob), (false, cfg.collapse_prob)]
                    } else {
                        vec![(false, 1.0)]
                    };
                    if cell == food {
                        expected_food += p;
                        let spots: Vec<usize> = self.food_cells.iter().copied().filter(|&f| f != cell).collect();
                        for &(st, ps) in &shelter_outcomes {
                            for &f in &spots {
                                row[self.encode(cell, st, f)] += p * ps / spots.len() as f64;
                            }
                        }
                    } else {
                        for &(st, ps) in &shelter_outcomes {
                            row[self.encode(cell, st, food)] += p * ps;
                        }
                    }
                }
                reward[s * N_ACTIONS + a] = cfg.food_reward * expected_food
                    - if intact { 0.0 } else { cfg.collapse_cost }
                    - cfg.step_cost;
            }
        }
        TabularModel::new(n, N_ACTIONS, 0, transition, None, reward, vec![])
    }

    /// Failure probabilities believed by a human who inflates straight (and
    /// stay) noise by `epsilon` and diagonal noise by `2 * epsilon`.
    pub fn noise_profile(&self, epsilon: f64) -> Result<[f64; N_ACTIONS]> {
        let base = self.cfg.base_noise;
        if !(epsilon >= 0.0) || base + 2.0 * epsilon > 1.0 + 1e-12 {
            return Err(Error::NoiseOutOfRange { base, epsilon });
        }
        let mut noise = [0.0; N_ACTIONS];
        for (a, eta) in noise.iter_mut().enumerate() {
            *eta = if is_diagonal(a) { base + 2.0 * epsilon } else { base + epsilon }.min(MAX_NOISE);
        }
        Ok(noise)
    }
}

/// The true model (every action fails with the base noise) and the human's
/// model with inflated noise.
pub fn build_food_shelter(cfg: &FoodShelterConfig, epsilon: f64) -> Result<(TabularModel, TabularModel)> {
    let space = FoodShelterSpace::new(cfg)?;
    let human_noise = space.noise_profile(epsilon)?;
    let truth = space.build(&space.noise_profile(0.0)?)?;
    let human = space.build(&human_noise)?;
    Ok((truth, human))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let space = FoodShelterSpace::new(&FoodShelterConfig::default()).unwrap();
        assert_eq!(space.n_states(), 144);
        for s in 0..space.n_states() {
            let (a, i, f) = space.decode(s);
            assert_eq!(space.encode(a, i, f), s);
        }
        assert_eq!(space.decode(space.start_state()), (0, true, 4));
    }

    #[test]
    fn zero_inflation_gives_the_true_model() {
        let (t, h) = build_food_shelter(&FoodShelterConfig::default(), 0.0).unwrap();
        assert_eq!(t, h);
    }

    #[test]
    fn diagonal_almost_never_succeeds_at_max_inflation() {
        let space = FoodShelterSpace::new(&FoodShelterConfig::default()).unwrap();
        let noise = space.noise_profile(0.45).unwrap();
        // capped just below certain failure
        assert_eq!(noise[4], MAX_NOISE);
        assert!((noise[0] - 0.55).abs() < 1e-12);
        assert!(matches!(space.noise_profile(0.5), Err(Error::NoiseOutOfRange { .. })));
    }

    #[test]
    fn eating_pays_and_relocates_food() {
        let space = FoodShelterSpace::new(&FoodShelterConfig::default()).unwrap();
        let (t, _) = build_food_shelter(&FoodShelterConfig::default(), 0.0).unwrap();
        // From the shelter corner the SE diagonal lands on the food at (1,1).
        let s = space.start_state();
        assert!((t.r(s, 6) - (0.9 + 0.1 / 3.0)).abs() < 1e-12);
        let row = t.transition_row(6, s);
        let on_food: f64 = (0..t.n_states()).filter(|&n| space.decode(n).0 == 4).map(|n| row[n]).sum();
        assert!((on_food - (0.9 + 0.1 / 3.0)).abs() < 1e-12);
        assert!((0..t.n_states()).all(|n| row[n] == 0.0 || space.decode(n).2 != 4 || space.decode(n).0 != 4));
    }
}
