//! Belief-alignment analysis.
//!
//! Two agents with the same history can still hold different beliefs when
//! their observation models differ. Whether the gap `KL(b_m‖b_h)` shrinks
//! after one step is governed by how much the dynamics mix (`α(T)`), how
//! informative the true observations are (`γ(O)`) and how wrong the human's
//! observation model is (`ε_O`). This module computes those quantities and
//! checks the contraction inequalities on concrete instances.
//!
//! Matrices are row-major with rows indexed by the current (or hidden) state:
//! `t[s][s'] = T(s'|s)` and `o[s][o] = O(o|s)`.

mod hmm;
pub mod lp;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use hmm::{
    build_rocksample_hmm, induce_hmm, measurement_correctness, random_instance, rocksample_pomdp, CentaurPolicy,
    InducedHmm, RandomInstance, ROCK_CHECK, ROCK_WAIT,
};

use crate::belief::kl_divergence;
use crate::error::{Error, Result};
use lp::{LinearProgram, LpSolution, Relation};

/// Largest state count for which the value of observation is solved exactly.
pub const MAX_EXACT_DIM: usize = 12;
/// Slack allowed when checking the contraction inequality.
pub const BOUND_TOL: f64 = 1e-7;
/// Slack allowed when checking the propagation-only contraction.
pub const BK_TOL: f64 = 1e-9;
const STOCHASTIC_TOL: f64 = 1e-9;

pub(crate) fn check_stochastic(m: &[Vec<f64>], what: &str) -> Result<()> {
    let width = m.first().map_or(0, |r| r.len());
    if m.is_empty() || width == 0 {
        return Err(Error::NonStochasticMatrix(format!("{what} is empty")));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != width {
            return Err(Error::NonStochasticMatrix(format!("{what} row {i} has the wrong width")));
        }
        if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::NonStochasticMatrix(format!("{what} row {i} has a negative entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NonStochasticMatrix(format!("{what} row {i} sums to {sum}")));
        }
    }
    Ok(())
}

fn check_square(t: &[Vec<f64>]) -> Result<()> {
    check_stochastic(t, "transition matrix")?;
    if t[0].len() != t.len() {
        return Err(Error::NonStochasticMatrix("transition matrix is not square".into()));
    }
    Ok(())
}

/// `(T b)(s') = Σ_s b(s) T(s'|s)`.
pub fn propagate(t: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; t.first().map_or(0, |r| r.len())];
    for (row, &p) in t.iter().zip(b) {
        if p != 0.0 {
            for (o, &q) in out.iter_mut().zip(row) {
                *o += p * q;
            }
        }
    }
    out
}

/// `min_{s1,s2} Σ_{s'} min(T(s'|s1), T(s'|s2))`.
pub fn minimal_mixing_rate(t: &[Vec<f64>]) -> Result<f64> {
    check_square(t)?;
    let mut alpha: f64 = 1.0;
    for (i, r1) in t.iter().enumerate() {
        for r2 in &t[i + 1..] {
            let overlap: f64 = r1.iter().zip(r2).map(|(a, b)| a.min(*b)).sum();
            alpha = alpha.min(overlap);
        }
    }
    Ok(alpha.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMethod {
    /// Orthant-by-orthant linear programs; the value is the infimum.
    Exact,
    /// Multi-restart local search; the value is only an upper bound.
    LocalSearch,
}

impl GammaMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            GammaMethod::Exact => "exact",
            GammaMethod::LocalSearch => "local_search",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueOfObservation {
    pub gamma: f64,
    pub method: GammaMethod,
}

/// `‖Oᵀx‖₁`, i.e. the ℓ1 norm of the observation distribution "generated" by
/// the signed state vector `x`.
pub fn observation_norm(o: &[Vec<f64>], x: &[f64]) -> f64 {
    propagate(o, x).iter().map(|v| v.abs()).sum()
}

/// `γ(O) = inf_{‖x‖₁=1} ‖Oᵀx‖₁`, exactly when the state count allows it and
/// by local search otherwise.
pub fn value_of_observation(o: &[Vec<f64>]) -> Result<ValueOfObservation> {
    match value_of_observation_exact(o) {
        Ok(gamma) => Ok(ValueOfObservation { gamma, method: GammaMethod::Exact }),
        Err(Error::DimensionTooLargeForExact { .. }) => Ok(ValueOfObservation {
            gamma: value_of_observation_local(o, 64, 0)?,
            method: GammaMethod::LocalSearch,
        }),
        Err(e) => Err(e),
    }
}

/// Exact `γ(O)`. The unit ℓ1 sphere is the union of one simplex per sign
/// orthant of `x`; on each the objective is convex and piecewise linear, so
/// one LP per orthant (up to the symmetry `x → -x`) finds the minimum.
pub fn value_of_observation_exact(o: &[Vec<f64>]) -> Result<f64> {
    check_stochastic(o, "observation matrix")?;
    let n = o.len();
    if n > MAX_EXACT_DIM {
        return Err(Error::DimensionTooLargeForExact { dim: n, max: MAX_EXACT_DIM });
    }
    let n_obs = o[0].len();
    let mut best = f64::INFINITY;
    for mask in 0..(1usize << (n - 1)) {
        // sign of x_s is negative when bit s-1 of mask is set; x_0 ≥ 0
        let sign = |s: usize| if s > 0 && mask >> (s - 1) & 1 == 1 { -1.0 } else { 1.0 };
        // variables: u_s = |x_s| (n), t_j ≥ |(Oᵀx)_j| (n_obs)
        let mut obj = vec![0.0; n + n_obs];
        obj[n..].iter_mut().for_each(|c| *c = 1.0);
        let mut lp = LinearProgram::minimize(obj);
        let mut sum = vec![0.0; n + n_obs];
        sum[..n].iter_mut().for_each(|c| *c = 1.0);
        lp.constrain(sum, Relation::Eq, 1.0)?;
        for j in 0..n_obs {
            let mut up = vec![0.0; n + n_obs];
            let mut down = vec![0.0; n + n_obs];
            for s in 0..n {
                up[s] = sign(s) * o[s][j];
                down[s] = -sign(s) * o[s][j];
            }
            up[n + j] = -1.0;
            down[n + j] = -1.0;
            lp.constrain(up, Relation::Le, 0.0)?;
            lp.constrain(down, Relation::Le, 0.0)?;
        }
        match lp.solve()? {
            LpSolution::Optimal { value, .. } => best = best.min(value),
            other => return Err(Error::LinearProgram(format!("orthant program ended {other:?}"))),
        }
    }
    Ok(best.clamp(0.0, 1.0))
}

/// Upper bound on `γ(O)` from random restarts of a shrinking-step local
/// search on the unit ℓ1 sphere. Every difference of two point masses is
/// also tried, since those are where zero-sum minima usually sit.
pub fn value_of_observation_local(o: &[Vec<f64>], restarts: usize, seed: u64) -> Result<f64> {
    check_stochastic(o, "observation matrix")?;
    let n = o.len();
    let normalize = |x: &mut Vec<f64>| {
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        if l1 > 0.0 {
            x.iter_mut().for_each(|v| *v /= l1);
        }
    };
    let mut best = observation_norm(o, &{
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        e
    });
    for i in 0..n {
        for k in i + 1..n {
            let mut x = vec![0.0; n];
            x[i] = 0.5;
            x[k] = -0.5;
            best = best.min(observation_norm(o, &x));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..restarts {
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        normalize(&mut x);
        let mut fx = observation_norm(o, &x);
        let mut step = 0.5;
        while step > 1e-7 {
            let mut improved = false;
            for _ in 0..4 * n {
                let mut y: Vec<f64> = x.iter().map(|v| v + step * rng.gen_range(-1.0..1.0)).collect();
                normalize(&mut y);
                let fy = observation_norm(o, &y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.min(fx);
    }
    Ok(best.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BkReport {
    pub lhs: f64,
    pub rhs: f64,
    pub alpha: f64,
    pub holds: bool,
}

/// `KL(T b1‖T b2) ≤ (1-α(T)) KL(b1‖b2)`.
pub fn bk_contraction_check(t: &[Vec<f64>], b1: &[f64], b2: &[f64]) -> Result<BkReport> {
    let alpha = minimal_mixing_rate(t)?;
    check_beliefs(t.len(), &[b1, b2])?;
    let lhs = kl_divergence(&propagate(t, b1), &propagate(t, b2));
    let kl = kl_divergence(b1, b2);
    let rhs = if kl.is_infinite() { f64::INFINITY } else { (1.0 - alpha) * kl };
    Ok(BkReport { lhs, rhs, alpha, holds: rhs.is_infinite() || lhs <= rhs + BK_TOL })
}

fn check_beliefs(n: usize, bs: &[&[f64]]) -> Result<()> {
    for b in bs {
        if b.len() != n {
            return Err(Error::InvalidBelief(format!("belief over {} states, matrix has {n}", b.len())));
        }
        let sum: f64 = b.iter().sum();
        if b.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidBelief(format!("not a distribution (sum {sum})")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RankReport {
    pub rank: usize,
    pub is_permutation: bool,
}

/// Rank of a deterministic transition matrix. With one-hot rows the rank is
/// the number of distinct successor columns, which is exact arithmetic.
pub fn deterministic_rank_check(t: &[Vec<f64>]) -> Result<RankReport> {
    check_square(t)?;
    let n = t.len();
    let mut hit = vec![false; n];
    for (i, row) in t.iter().enumerate() {
        let ones: Vec<usize> = (0..n).filter(|&j| row[j] == 1.0).collect();
        if ones.len() != 1 || row.iter().filter(|&&p| p != 0.0).count() != 1 {
            return Err(Error::NotDeterministic(i));
        }
        hit[ones[0]] = true;
    }
    let rank = hit.iter().filter(|&&h| h).count();
    Ok(RankReport { rank, is_permutation: rank == n })
}

/// Two sides of an inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(lhs: f64, rhs: f64, tol: f64) -> Self {
        Self { lhs, rhs, holds: lhs <= rhs + tol }
    }
}

fn condition(b: &[f64], o: &[Vec<f64>], j: usize) -> Option<(Vec<f64>, f64)> {
    let joint: Vec<f64> = b.iter().zip(o).map(|(p, row)| p * row[j]).collect();
    let z: f64 = joint.iter().sum();
    (z > 0.0).then(|| (joint.into_iter().map(|v| v / z).collect(), z))
}

/// Conditioning step with a true model `o1` and an approximation `o2`:
/// `E_{o~O1(b1)}[KL(O1^o b1‖O2^o b2)] ≤ KL(b1‖b2) + ε_O - KL(O1(b1)‖O2(b2))`.
pub fn observation_step_check(o1: &[Vec<f64>], o2: &[Vec<f64>], b1: &[f64], b2: &[f64]) -> Result<InequalityCheck> {
    check_stochastic(o1, "true observation matrix")?;
    check_stochastic(o2, "approximate observation matrix")?;
    check_beliefs(o1.len(), &[b1, b2])?;
    let eps: f64 = o1.iter().zip(o2).map(|(p, q)| kl_divergence(p, q)).fold(0.0, f64::max);
    let mut lhs = 0.0;
    for j in 0..o1[0].len() {
        if let Some((post1, p)) = condition(b1, o1, j) {
            lhs += match condition(b2, o2, j) {
                Some((post2, _)) => p * kl_divergence(&post1, &post2),
                None => f64::INFINITY,
            };
        }
    }
    let rhs = kl_divergence(b1, b2) + eps - kl_divergence(&propagate(o1, b1), &propagate(o2, b2));
    Ok(InequalityCheck::new(lhs, rhs, BOUND_TOL))
}

/// Lower bound on how far apart the two predicted observation distributions
/// are: `KL(O(b1)‖Ô(b2)) ≥ ½(γ(O) KL(b1‖b2)/ln μ)² + ε_O - 3γ(O)√ε_O`,
/// reported as `lhs = bound`, `rhs = KL(O(b1)‖Ô(b2))`.
pub fn observation_divergence_check(
    o: &[Vec<f64>],
    o_hat: &[Vec<f64>],
    b1: &[f64],
    b2: &[f64],
    mu: f64,
) -> Result<InequalityCheck> {
    check_stochastic(o_hat, "approximate observation matrix")?;
    check_beliefs(o.len(), &[b1, b2])?;
    let gamma = value_of_observation(o)?.gamma;
    let eps: f64 = o.iter().zip(o_hat).map(|(p, q)| kl_divergence(p, q)).fold(0.0, f64::max);
    let q = gamma * kl_divergence(b1, b2) / mu.ln();
    let bound = 0.5 * q * q + eps - 3.0 * gamma * eps.sqrt();
    Ok(InequalityCheck::new(bound, kl_divergence(&propagate(o, b1), &propagate(o_hat, b2)), BOUND_TOL))
}

/// How the belief floor `μ` is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorMode {
    /// Beliefs must already satisfy `b(s) ≥ μ`.
    Require,
    /// Beliefs are clipped to `μ` and renormalized first.
    Enforce,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    /// Expected `KL(b'_m‖b'_h)` over the machine's observation distribution.
    pub lhs: f64,
    pub rhs: f64,
    pub alpha: f64,
    pub gamma_obs: f64,
    pub gamma_method: GammaMethod,
    pub eps_o: f64,
    pub kl_before: f64,
    pub mu: f64,
    pub floor_mode: FloorMode,
    pub holds: bool,
    /// Set when `γ` is only an upper bound, so `rhs` may be overstated.
    pub advisory: bool,
    /// Sampled estimate of `lhs`, when requested.
    pub mc_lhs: Option<f64>,
}

/// One filtering step of both agents under the induced HMM, checked against
///
/// `E_o[KL(b'_m‖b'_h)] ≤ (1-α) KL(b_m‖b_h) + 3γ√ε_O - (γ KL(b_m‖b_h) / (√2 ln(1/μ)))²`
///
/// with `α = α(T)`, `γ = γ(O_m)`. The expectation is summed exactly over the
/// observations; `n_samples > 0` adds a Monte Carlo estimate as a cross-check.
pub fn alignment_bound_check(
    hmm: &InducedHmm,
    b_m: &[f64],
    b_h: &[f64],
    mu: f64,
    floor_mode: FloorMode,
    n_samples: usize,
    seed: u64,
) -> Result<BoundReport> {
    let n = hmm.n_states();
    check_beliefs(n, &[b_m, b_h])?;
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::InvalidBelief(format!("floor {mu} must lie in (0, 1)")));
    }
    let (b_m, b_h) = match floor_mode {
        FloorMode::Enforce => {
            let floor = |b: &[f64]| crate::belief::BeliefState::new(b.to_vec())?.floored(mu).map(|b| b.into_inner());
            (floor(b_m)?, floor(b_h)?)
        }
        FloorMode::Require => {
            for b in [b_m, b_h] {
                if let Some((state, &value)) = b.iter().enumerate().find(|(_, &p)| p < mu) {
                    return Err(Error::BeliefFloorViolated { state, value, mu });
                }
            }
            (b_m.to_vec(), b_h.to_vec())
        }
    };
    let alpha = minimal_mixing_rate(&hmm.transition)?;
    let voo = value_of_observation(&hmm.observation_true)?;
    let gamma = voo.gamma;
    let kl_before = kl_divergence(&b_m, &b_h);
    let lhs = hmm.expected_posterior_kl(&b_m, &b_h);
    let quad = gamma * kl_before / (std::f64::consts::SQRT_2 * (1.0 / mu).ln());
    let rhs = (1.0 - alpha) * kl_before + 3.0 * gamma * hmm.epsilon_o.sqrt() - quad * quad;
    let mc_lhs = (n_samples > 0).then(|| hmm.sampled_posterior_kl(&b_m, &b_h, n_samples, seed));
    Ok(BoundReport {
        lhs,
        rhs,
        alpha,
        gamma_obs: gamma,
        gamma_method: voo.method,
        eps_o: hmm.epsilon_o,
        kl_before,
        mu,
        floor_mode,
        holds: lhs <= rhs + BOUND_TOL,
        advisory: voo.method != GammaMethod::Exact,
        mc_lhs,
    })
}

/// CSV of bound reports, one row per instance.
pub fn write_bound_csv<W: Write>(reports: &[(usize, BoundReport)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["instance_id", "alpha", "gamma", "eps_O", "kl_before", "lhs", "rhs", "holds", "gamma_method"])?;
    for (id, r) in reports {
        w.write_record([
            id.to_string(),
            format!("{:.12e}", r.alpha),
            format!("{:.12e}", r.gamma_obs),
            format!("{:.12e}", r.eps_o),
            format!("{:.12e}", r.kl_before),
            format!("{:.12e}", r.lhs),
            format!("{:.12e}", r.rhs),
            r.holds.to_string(),
            r.gamma_method.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixing_rate_examples() {
        assert_eq!(minimal_mixing_rate(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), 0.0);
        assert_eq!(minimal_mixing_rate(&[vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap(), 1.0);
        let a = minimal_mixing_rate(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        assert!((a - 0.3).abs() < 1e-12);
        assert!(matches!(minimal_mixing_rate(&[vec![0.5, 0.6], vec![0.5, 0.5]]), Err(Error::NonStochasticMatrix(_))));
    }

    #[test]
    fn value_of_observation_examples() {
        let id = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert!((value_of_observation_exact(&id).unwrap() - 1.0).abs() < 1e-9);
        let flat = vec![vec![0.2, 0.8]; 3];
        assert!(value_of_observation_exact(&flat).unwrap().abs() < 1e-9);
        let noisy = vec![vec![0.8, 0.2], vec![0.2, 0.8]];
        assert!((value_of_observation_exact(&noisy).unwrap() - 0.6).abs() < 1e-9);
    }

    #[test]
    fn fallback_is_flagged() {
        let big: Vec<Vec<f64>> = (0..13).map(|s| (0..13).map(|o| if o == s { 1.0 } else { 0.0 }).collect()).collect();
        let v = value_of_observation(&big).unwrap();
        assert_eq!(v.method, GammaMethod::LocalSearch);
        assert!((v.gamma - 1.0).abs() < 1e-6);
    }

    #[test]
    fn local_search_bounds_exact_from_above() {
        let o = vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.6, 0.3], vec![0.3, 0.3, 0.4], vec![0.25, 0.25, 0.5]];
        let exact = value_of_observation_exact(&o).unwrap();
        let local = value_of_observation_local(&o, 16, 3).unwrap();
        assert!(local >= exact - 1e-12);
        assert!(local - exact < 1e-3, "local {local} exact {exact}");
    }

    #[test]
    fn rank_of_deterministic_matrices() {
        let id = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(deterministic_rank_check(&id).unwrap(), RankReport { rank: 3, is_permutation: true });
        let merge = vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(deterministic_rank_check(&merge).unwrap(), RankReport { rank: 2, is_permutation: false });
        let soft = vec![vec![0.5, 0.5], vec![0.0, 1.0]];
        assert!(matches!(deterministic_rank_check(&soft), Err(Error::NotDeterministic(0))));
    }

    #[test]
    fn floor_is_checked_or_enforced() {
        let hmm = InducedHmm::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            vec![vec![0.8, 0.2], vec![0.2, 0.8]],
        )
        .unwrap();
        let err = alignment_bound_check(&hmm, &[1.0, 0.0], &[0.5, 0.5], 1e-3, FloorMode::Require, 0, 0);
        assert!(matches!(err, Err(Error::BeliefFloorViolated { state: 1, .. })));
        let r = alignment_bound_check(&hmm, &[1.0, 0.0], &[0.5, 0.5], 1e-3, FloorMode::Enforce, 0, 0).unwrap();
        assert!(r.holds);
        assert_eq!(r.floor_mode, FloorMode::Enforce);
    }
}
