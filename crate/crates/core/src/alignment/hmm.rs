//! Hidden Markov models induced by fixing the centaur's policy.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_stochastic, propagate};
use crate::belief::{kl_divergence, BeliefState};
use crate::error::{Error, Result};
use crate::model::{sample_index, TabularModel};

/// Dynamics and the two agents' observation models under a fixed policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducedHmm {
    pub transition: Vec<Vec<f64>>,
    pub observation_true: Vec<Vec<f64>>,
    pub observation_approx: Vec<Vec<f64>>,
    /// `max_s KL(O_m(.|s)‖O_h(.|s))`.
    pub epsilon_o: f64,
    /// The policy acts differently across states and the observation model
    /// depends on the action, so rows were taken at each destination's action.
    pub policy_dependent_observation: bool,
}

impl InducedHmm {
    pub fn new(transition: Vec<Vec<f64>>, observation_true: Vec<Vec<f64>>, observation_approx: Vec<Vec<f64>>) -> Result<Self> {
        check_stochastic(&transition, "transition matrix")?;
        check_stochastic(&observation_true, "true observation matrix")?;
        check_stochastic(&observation_approx, "approximate observation matrix")?;
        let n = transition.len();
        if transition[0].len() != n || observation_true.len() != n || observation_approx.len() != n {
            return Err(Error::NonStochasticMatrix("matrices disagree on the state count".into()));
        }
        if observation_true[0].len() != observation_approx[0].len() {
            return Err(Error::NonStochasticMatrix("observation matrices disagree on the observation count".into()));
        }
        let epsilon_o = observation_true
            .iter()
            .zip(&observation_approx)
            .map(|(p, q)| kl_divergence(p, q))
            .fold(0.0, f64::max);
        Ok(Self { transition, observation_true, observation_approx, epsilon_o, policy_dependent_observation: false })
    }

    pub fn n_states(&self) -> usize {
        self.transition.len()
    }

    pub fn n_observations(&self) -> usize {
        self.observation_true[0].len()
    }

    /// Propagated belief conditioned on `o` under `obs`, and the probability
    /// of `o`. `None` when `o` is impossible.
    fn update(&self, predicted: &[f64], obs: &[Vec<f64>], o: usize) -> (Option<Vec<f64>>, f64) {
        let joint: Vec<f64> = predicted.iter().zip(obs).map(|(p, row)| p * row[o]).collect();
        let z: f64 = joint.iter().sum();
        if z > 0.0 {
            (Some(joint.into_iter().map(|v| v / z).collect()), z)
        } else {
            (None, 0.0)
        }
    }

    /// `Σ_o P_m(o) KL(b'_m(o)‖b'_h(o))`, where the machine filters with the
    /// true observations and the human with the approximate ones.
    pub fn expected_posterior_kl(&self, b_m: &[f64], b_h: &[f64]) -> f64 {
        let (pm, ph) = (propagate(&self.transition, b_m), propagate(&self.transition, b_h));
        let mut total = 0.0;
        for o in 0..self.n_observations() {
            let (post_m, p_o) = self.update(&pm, &self.observation_true, o);
            let Some(post_m) = post_m else { continue };
            match self.update(&ph, &self.observation_approx, o).0 {
                Some(post_h) => total += p_o * kl_divergence(&post_m, &post_h),
                None => return f64::INFINITY,
            }
        }
        total
    }

    /// Monte Carlo estimate of [`expected_posterior_kl`](Self::expected_posterior_kl)
    /// from `n` simulated steps of the true process.
    pub fn sampled_posterior_kl(&self, b_m: &[f64], b_h: &[f64], n: usize, seed: u64) -> f64 {
        let (pm, ph) = (propagate(&self.transition, b_m), propagate(&self.transition, b_h));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cache: Vec<Option<f64>> = vec![None; self.n_observations()];
        let mut total = 0.0;
        for _ in 0..n {
            let s = sample_index(b_m, rng.gen());
            let next = sample_index(&self.transition[s], rng.gen());
            let o = sample_index(&self.observation_true[next], rng.gen());
            let kl = *cache[o].get_or_insert_with(|| {
                match (self.update(&pm, &self.observation_true, o).0, self.update(&ph, &self.observation_approx, o).0) {
                    (Some(a), Some(b)) => kl_divergence(&a, &b),
                    _ => f64::INFINITY,
                }
            });
            total += kl;
        }
        total / n as f64
    }
}

/// The centaur's fixed behaviour when a POMDP is reduced to an HMM.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CentaurPolicy {
    Constant(usize),
    PerState(Vec<usize>),
}

impl CentaurPolicy {
    pub fn action(&self, s: usize) -> usize {
        match self {
            CentaurPolicy::Constant(a) => *a,
            CentaurPolicy::PerState(v) => v[s],
        }
    }
}

/// Fixes `policy` in `pomdp`. The observation row of a destination state is
/// the one of the action the policy takes there; `human` supplies the
/// human's observation model (defaults to the true one).
pub fn induce_hmm(pomdp: &TabularModel, policy: &CentaurPolicy, human: Option<&TabularModel>) -> Result<InducedHmm> {
    if pomdp.is_fully_observable() {
        return Err(Error::InvalidModel("inducing an HMM needs an observation model".into()));
    }
    let n = pomdp.n_states();
    if let CentaurPolicy::PerState(v) = policy {
        if v.len() != n {
            return Err(Error::InvalidSpec(format!("policy covers {} states, model has {n}", v.len())));
        }
    }
    for s in 0..n {
        pomdp.check_action(policy.action(s))?;
    }
    let obs_of = |m: &TabularModel| -> Result<Vec<Vec<f64>>> {
        if m.n_states() != n || m.n_observations() != pomdp.n_observations() || m.n_actions() != pomdp.n_actions() {
            return Err(Error::InvalidModel("human model does not share the index spaces".into()));
        }
        Ok((0..n).map(|s| m.observation_row(policy.action(s), s).unwrap().to_vec()).collect())
    };
    let transition: Vec<Vec<f64>> = (0..n).map(|s| pomdp.transition_row(policy.action(s), s).to_vec()).collect();
    let observation_true = obs_of(pomdp)?;
    let observation_approx = match human {
        Some(h) => obs_of(h)?,
        None => observation_true.clone(),
    };
    let mut hmm = InducedHmm::new(transition, observation_true, observation_approx)?;
    hmm.policy_dependent_observation = match policy {
        CentaurPolicy::Constant(_) => false,
        CentaurPolicy::PerState(v) => {
            let varies = v.iter().any(|&a| a != v[0]);
            let obs_differ = (0..n).any(|s| {
                let first = pomdp.observation_row(0, s).unwrap();
                (1..pomdp.n_actions()).any(|a| pomdp.observation_row(a, s).unwrap() != first)
            });
            varies && obs_differ
        }
    };
    Ok(hmm)
}

pub const ROCK_WAIT: usize = 0;
pub const ROCK_CHECK: usize = 1;
const MAX_ROCKS: usize = 4;

/// Probability that one rock reading is right: `½(1 + 2^(-d/η))`.
pub fn measurement_correctness(efficiency: f64, distance: f64) -> f64 {
    if distance <= 0.0 {
        1.0
    } else if efficiency <= 0.0 {
        0.5
    } else {
        0.5 * (1.0 + (-distance / efficiency).exp2())
    }
}

/// The rock-quality factor of a RockSample-style task as a POMDP. Hidden
/// states are the `2^n` good/bad assignments and never change; `ROCK_CHECK`
/// reads every rock with independent noise, `ROCK_WAIT` observes nothing.
pub fn rocksample_pomdp(n_rocks: usize, efficiency: f64, distance: f64) -> Result<TabularModel> {
    if n_rocks == 0 || n_rocks > MAX_ROCKS {
        return Err(Error::TooManyRocks(n_rocks));
    }
    let n = 1usize << n_rocks;
    let p = measurement_correctness(efficiency, distance);
    let mut transition = vec![0.0; 2 * n * n];
    for a in 0..2 {
        for s in 0..n {
            transition[(a * n + s) * n + s] = 1.0;
        }
    }
    let mut observation = vec![1.0 / n as f64; 2 * n * n];
    for s in 0..n {
        for o in 0..n {
            let agree = (!(s ^ o) & (n - 1)).count_ones() as i32;
            observation[(ROCK_CHECK * n + s) * n + o] = p.powi(agree) * (1.0 - p).powi(n_rocks as i32 - agree);
        }
    }
    TabularModel::new(n, 2, n, transition, Some(observation), vec![0.0; 2 * n], vec![])
}

/// Always-measure HMM of the rock factor with the machine's and the human's
/// sensor efficiencies.
pub fn build_rocksample_hmm(n_rocks: usize, efficiency_m: f64, efficiency_h: f64, distance: f64) -> Result<InducedHmm> {
    let m = rocksample_pomdp(n_rocks, efficiency_m, distance)?;
    let h = rocksample_pomdp(n_rocks, efficiency_h, distance)?;
    induce_hmm(&m, &CentaurPolicy::Constant(ROCK_CHECK), Some(&h))
}

/// A random HMM with a pair of beliefs that respects the floor `μ`.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub hmm: InducedHmm,
    pub b_m: Vec<f64>,
    pub b_h: Vec<f64>,
}

fn dirichlet_row<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Draws an instance with `2..=max_states` states, `2..=max_obs`
/// observations and `ε_O ≤ eps_max`. A third of the transition matrices are
/// permutations. The human's observation rows mix the true ones with noise
/// at weight `w ≤ 1 - e^{-eps_max}`, which keeps every row KL below `eps_max`.
pub fn random_instance<R: Rng>(rng: &mut R, max_states: usize, max_obs: usize, eps_max: f64, mu: f64) -> Result<RandomInstance> {
    let n = rng.gen_range(2..=max_states.max(2));
    let m = rng.gen_range(2..=max_obs.max(2));
    let transition: Vec<Vec<f64>> = if rng.gen_bool(1.0 / 3.0) {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        perm.iter().map(|&j| (0..n).map(|k| if k == j { 1.0 } else { 0.0 }).collect()).collect()
    } else {
        (0..n).map(|_| dirichlet_row(n, rng)).collect()
    };
    let o_m: Vec<Vec<f64>> = (0..n).map(|_| dirichlet_row(m, rng)).collect();
    let w = rng.gen::<f64>() * (1.0 - (-eps_max).exp());
    let o_h: Vec<Vec<f64>> = o_m
        .iter()
        .map(|row| {
            let noise = dirichlet_row(m, rng);
            row.iter().zip(&noise).map(|(p, q)| (1.0 - w) * p + w * q).collect()
        })
        .collect();
    let floor = |b: Vec<f64>| BeliefState::new(b).and_then(|b| b.floored(mu)).map(BeliefState::into_inner);
    let b_m = floor(renorm(dirichlet_row(n, rng)))?;
    let b_h = floor(renorm(dirichlet_row(n, rng)))?;
    Ok(RandomInstance { hmm: InducedHmm::new(transition, o_m, o_h)?, b_m, b_h })
}

fn renorm(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::value_of_observation_exact;

    #[test]
    fn correctness_limits() {
        assert_eq!(measurement_correctness(1.0, 0.0), 1.0);
        assert_eq!(measurement_correctness(0.0, 2.0), 0.5);
        assert!((measurement_correctness(1e-6, 1.0) - 0.5).abs() < 1e-12);
        assert!((measurement_correctness(2.0, 2.0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn measuring_policy_is_informative_waiting_is_not() {
        let m = rocksample_pomdp(2, 4.0, 1.0).unwrap();
        let check = induce_hmm(&m, &CentaurPolicy::Constant(ROCK_CHECK), None).unwrap();
        let wait = induce_hmm(&m, &CentaurPolicy::Constant(ROCK_WAIT), None).unwrap();
        assert!(value_of_observation_exact(&check.observation_true).unwrap() > 0.0);
        assert!(value_of_observation_exact(&wait.observation_true).unwrap() < 1e-12);
        assert_eq!(check.epsilon_o, 0.0);
    }

    #[test]
    fn mixed_policy_flags_observation_dependence() {
        let m = rocksample_pomdp(1, 1.0, 1.0).unwrap();
        let hmm = induce_hmm(&m, &CentaurPolicy::PerState(vec![ROCK_WAIT, ROCK_CHECK]), None).unwrap();
        assert!(hmm.policy_dependent_observation);
        assert!(!induce_hmm(&m, &CentaurPolicy::PerState(vec![1, 1]), None).unwrap().policy_dependent_observation);
    }

    #[test]
    fn too_many_rocks() {
        assert!(matches!(build_rocksample_hmm(5, 1.0, 1.0, 1.0), Err(Error::TooManyRocks(5))));
    }

    #[test]
    fn random_instances_respect_preconditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, 5, 5, 0.2, 1e-3).unwrap();
            assert!(inst.hmm.epsilon_o <= 0.2 + 1e-12);
            assert!(inst.b_m.iter().chain(&inst.b_h).all(|&p| p >= 1e-3 - 1e-15));
        }
    }
}
