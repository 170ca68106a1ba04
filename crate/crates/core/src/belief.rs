//! Belief states and the two belief operators.
//!
//! Propagation pushes a belief through the dynamics,
//! `(T^a b)(s) = Σ_{s'} b(s') T(s|s',a)`, and conditioning reweights it by the
//! observation likelihood, `(O^{o,a} b)(s) ∝ b(s) O(o|s,a)`. A full update is
//! conditioning after propagation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TabularModel;

/// Tolerance for a belief summing to one.
pub const BELIEF_TOL: f64 = 1e-9;
/// Allowed drift of a propagated belief before renormalization.
const DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState(Vec<f64>);

impl BeliefState {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidBelief("empty belief".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidBelief("negative or non-finite entry".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > BELIEF_TOL {
            return Err(Error::InvalidBelief(format!("sums to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidBelief("weights must be non-negative with positive sum".into()));
        }
        Ok(Self(weights.into_iter().map(|w| w / sum).collect()))
    }

    pub fn point(n: usize, s: usize) -> Self {
        let mut p = vec![0.0; n];
        p[s] = 1.0;
        Self(p)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// The support state when the belief is a point mass.
    pub fn as_point(&self) -> Option<usize> {
        let mut found = None;
        for (s, &p) in self.0.iter().enumerate() {
            if p > 0.0 {
                if found.is_some() || (p - 1.0).abs() > BELIEF_TOL {
                    return None;
                }
                found = Some(s);
            }
        }
        found
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Raises every entry to at least `mu` by clipping and renormalizing the
    /// unclipped mass until the floor holds.
    pub fn floored(&self, mu: f64) -> Result<Self> {
        let n = self.0.len();
        if !(mu > 0.0) || mu * n as f64 > 1.0 {
            return Err(Error::InvalidBelief(format!("floor {mu} infeasible for {n} states")));
        }
        let mut clipped = vec![false; n];
        let mut p = self.0.clone();
        loop {
            let n_clipped = clipped.iter().filter(|&&c| c).count();
            let free_mass: f64 = p.iter().zip(&clipped).filter(|(_, &c)| !c).map(|(v, _)| *v).sum();
            let target = 1.0 - mu * n_clipped as f64;
            let mut changed = false;
            for s in 0..n {
                if clipped[s] {
                    p[s] = mu;
                } else {
                    p[s] = if free_mass > 0.0 { p[s] * target / free_mass } else { target / (n - n_clipped) as f64 };
                    if p[s] < mu {
                        clipped[s] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                return Ok(Self(p));
            }
        }
    }
}

fn renormalized(mut v: Vec<f64>, expect_unit: bool) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    if expect_unit {
        debug_assert!((sum - 1.0).abs() <= DRIFT_TOL, "belief drifted to {sum}");
    }
    for x in &mut v {
        *x /= sum;
    }
    v
}

/// `T^a b`: the predicted belief after taking `a`.
pub fn belief_propagate(model: &TabularModel, b: &BeliefState, a: usize) -> Result<BeliefState> {
    model.check_action(a)?;
    check_dims(model, b)?;
    let n = model.n_states();
    let mut out = vec![0.0; n];
    for (s, &p) in b.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (o, &t) in out.iter_mut().zip(model.transition_row(a, s)) {
            *o += p * t;
        }
    }
    Ok(BeliefState(renormalized(out, true)))
}

/// `O^{o,a} b`: Bayes conditioning on observation `o` received after `a`.
///
/// For fully observable models the observation is the state index itself.
pub fn belief_condition(model: &TabularModel, b: &BeliefState, a: usize, o: usize) -> Result<BeliefState> {
    model.check_action(a)?;
    check_dims(model, b)?;
    if model.is_fully_observable() {
        model.check_state(o)?;
        if b.probs()[o] <= 0.0 {
            return Err(Error::ZeroLikelihoodObservation { observation: o });
        }
        return Ok(BeliefState::point(model.n_states(), o));
    }
    if o >= model.n_observations() {
        return Err(Error::IndexOutOfRange(format!("observation {o}")));
    }
    let post: Vec<f64> = b
        .probs()
        .iter()
        .enumerate()
        .map(|(s, &p)| p * model.observation_row(a, s).unwrap()[o])
        .collect();
    let z: f64 = post.iter().sum();
    if !(z > 0.0) {
        return Err(Error::ZeroLikelihoodObservation { observation: o });
    }
    Ok(BeliefState(renormalized(post, false)))
}

/// Full filter step `b' = O^{o,a}(T^a b)`.
pub fn belief_update(model: &TabularModel, b: &BeliefState, a: usize, o: usize) -> Result<BeliefState> {
    let predicted = belief_propagate(model, b, a)?;
    belief_condition(model, &predicted, a, o)
}

/// Probability of each observation after acting `a` from belief `b`, given a
/// matrix `[s][o]` of observation likelihoods at the successor state.
pub fn observation_distribution(b: &[f64], observation: &[Vec<f64>]) -> Vec<f64> {
    let n_obs = observation.first().map_or(0, |r| r.len());
    let mut out = vec![0.0; n_obs];
    for (s, &p) in b.iter().enumerate() {
        for (o, &q) in observation[s].iter().enumerate() {
            out[o] += p * q;
        }
    }
    out
}

/// KL(p‖q) in nats with `0·log 0 = 0`; `+∞` when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            kl += pi * (pi / qi).ln();
        }
    }
    kl.max(0.0)
}

/// KL divergence between two belief states.
pub fn belief_kl(b1: &BeliefState, b2: &BeliefState) -> f64 {
    kl_divergence(b1.probs(), b2.probs())
}

fn check_dims(model: &TabularModel, b: &BeliefState) -> Result<()> {
    if b.len() != model.n_states() {
        return Err(Error::InvalidBelief(format!(
            "belief over {} states, model has {}",
            b.len(),
            model.n_states()
        )));
    }
    Ok(())
}
