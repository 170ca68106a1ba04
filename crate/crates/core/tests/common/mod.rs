//! Helpers shared by the integration tests. Everything here is written
//! independently of the library's solvers so it can serve as an oracle.
#![allow(dead_code)]

use centaur_core::TabularModel;
use rand::Rng;

/// Random fully observable MDP with `n` states, `na` actions, sparse-ish
/// transitions and rewards in [-1, 1]. No terminal states.
pub fn random_mdp<R: Rng>(rng: &mut R, n: usize, na: usize) -> TabularModel {
    let transition: Vec<Vec<Vec<f64>>> = (0..na)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let mut row: Vec<f64> =
                        (0..n).map(|_| if rng.gen_bool(0.5) { rng.gen::<f64>() } else { 0.0 }).collect();
                    row[rng.gen_range(0..n)] += 0.1;
                    let total: f64 = row.iter().sum();
                    row.iter_mut().for_each(|p| *p /= total);
                    row
                })
                .collect()
        })
        .collect();
    let reward = (0..n).map(|_| (0..na).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    TabularModel::from_mdp(transition, reward, vec![]).unwrap()
}

/// Plain synchronous value iteration; returns `q[s][a]`.
pub fn oracle_q(model: &TabularModel, lambda: f64) -> Vec<Vec<f64>> {
    let (n, na) = (model.n_states(), model.n_actions());
    let mut v = vec![0.0; n];
    let mut q = vec![vec![0.0; na]; n];
    for _ in 0..100_000 {
        for s in 0..n {
            for a in 0..na {
                let ev: f64 = if model.is_terminal(s) {
                    0.0
                } else {
                    (0..n).map(|j| model.t(a, s, j) * v[j]).sum()
                };
                q[s][a] = if model.is_terminal(s) { 0.0 } else { model.r(s, a) + lambda * ev };
            }
        }
        let next: Vec<f64> = q.iter().map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < 1e-13 {
            break;
        }
    }
    q
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// `Σ p ln(p/q)` with `0 ln 0 = 0`.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

pub fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let s: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= s);
    x
}

pub fn random_stochastic<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| random_simplex(rng, cols)).collect()
}

pub fn random_permutation<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.gen_range(0..=i));
    }
    p
}

pub fn permutation_matrix(p: &[usize]) -> Vec<Vec<f64>> {
    let n = p.len();
    (0..n).map(|i| (0..n).map(|j| if p[i] == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// `(Tb)(j) = Σ_i b(i) T[i][j]`.
pub fn push_forward(t: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = t[0].len();
    (0..n).map(|j| b.iter().zip(t).map(|(bi, row)| bi * row[j]).sum()).collect()
}

/// `‖Oᵀx‖₁`.
pub fn obs_norm(o: &[Vec<f64>], x: &[f64]) -> f64 {
    (0..o[0].len()).map(|j| x.iter().zip(o).map(|(xi, row)| xi * row[j]).sum::<f64>().abs()).sum()
}

/// Minimum of `‖Oᵀx‖₁` over the points of the unit ℓ1 sphere whose
/// coordinates are multiples of `1/res`. Every sphere point lies within ℓ1
/// distance `2n/res` of one of them and the map is 1-Lipschitz in ℓ1, so the
/// true infimum is within that of the result.
pub fn grid_gamma(o: &[Vec<f64>], res: usize) -> f64 {
    let n = o.len();
    let mut best = f64::INFINITY;
    let mut parts = vec![0usize; n];
    fn rec(o: &[Vec<f64>], parts: &mut Vec<usize>, i: usize, left: usize, res: usize, best: &mut f64) {
        let n = parts.len();
        if i == n - 1 {
            parts[i] = left;
            for signs in 0..(1u32 << (n - 1)) {
                let x: Vec<f64> = (0..n)
                    .map(|k| {
                        let v = parts[k] as f64 / res as f64;
                        if k > 0 && signs >> (k - 1) & 1 == 1 { -v } else { v }
                    })
                    .collect();
                *best = best.min(obs_norm(o, &x));
            }
            return;
        }
        for k in 0..=left {
            parts[i] = k;
            rec(o, parts, i + 1, left - k, res, best);
        }
    }
    rec(o, &mut parts, 0, res, res, &mut best);
    best
}

fn bayes(prior: &[f64], o: &[Vec<f64>], j: usize) -> Option<(Vec<f64>, f64)> {
    let joint: Vec<f64> = prior.iter().zip(o).map(|(p, row)| p * row[j]).collect();
    let z: f64 = joint.iter().sum();
    (z > 0.0).then(|| (joint.iter().map(|v| v / z).collect(), z))
}

/// `Σ_o P_m(o) KL(b'_m‖b'_h)` after one propagate-and-condition step, the
/// machine using `om` and the human `oh`.
pub fn expected_step_kl(t: &[Vec<f64>], om: &[Vec<f64>], oh: &[Vec<f64>], bm: &[f64], bh: &[f64]) -> f64 {
    let (pm, ph) = (push_forward(t, bm), push_forward(t, bh));
    let mut total = 0.0;
    for j in 0..om[0].len() {
        if let Some((post_m, p)) = bayes(&pm, om, j) {
            let (post_h, _) = bayes(&ph, oh, j).expect("human assigns the observation positive probability");
            total += p * kl(&post_m, &post_h);
        }
    }
    total
}

/// Closed-form α: `min_{i,k} Σ_j min(T[i][j], T[k][j])`.
pub fn mixing_rate(t: &[Vec<f64>]) -> f64 {
    let mut best: f64 = 1.0;
    for a in t {
        for b in t {
            best = best.min(a.iter().zip(b).map(|(x, y)| x.min(*y)).sum());
        }
    }
    best
}
