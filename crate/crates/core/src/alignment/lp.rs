//! Dense two-phase simplex with Bland's rule.
//!
//! Only meant for the tiny programs of the alignment analysis (tens of
//! variables); nothing here is tuned for scale.

use crate::error::{Error, Result};

const EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// `min c·x` subject to linear constraints and `x ≥ 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpSolution {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpSolution {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpSolution::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }
}

impl LinearProgram {
    pub fn minimize(objective: Vec<f64>) -> Self {
        Self { objective, rows: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) -> Result<&mut Self> {
        if coeffs.len() != self.n_vars() {
            return Err(Error::LinearProgram(format!(
                "constraint has {} coefficients, program has {} variables",
                coeffs.len(),
                self.n_vars()
            )));
        }
        if !rhs.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::LinearProgram("non-finite constraint".into()));
        }
        self.rows.push((coeffs, rel, rhs));
        Ok(self)
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.n_vars();
        let m = self.rows.len();
        // Column layout: originals, one slack/surplus per inequality, then
        // one artificial per row that has no slack to start the basis.
        let n_slack = self.rows.iter().filter(|(_, r, _)| *r != Relation::Eq).count();
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = self.rows.clone();
        for (coeffs, rel, rhs) in &mut rows {
            if *rhs < 0.0 {
                coeffs.iter_mut().for_each(|c| *c = -*c);
                *rhs = -*rhs;
                *rel = match *rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
        }
        let n_art = rows.iter().filter(|(_, r, _)| *r != Relation::Le).count();
        let cols = n + n_slack + n_art;
        let mut t = Tableau { a: vec![vec![0.0; cols + 1]; m], basis: vec![0; m], cols };
        let (mut next_slack, mut next_art) = (n, n + n_slack);
        for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
            t.a[i][..n].copy_from_slice(coeffs);
            t.a[i][cols] = *rhs;
            match rel {
                Relation::Le => {
                    t.a[i][next_slack] = 1.0;
                    t.basis[i] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    t.a[i][next_slack] = -1.0;
                    next_slack += 1;
                    t.a[i][next_art] = 1.0;
                    t.basis[i] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    t.a[i][next_art] = 1.0;
                    t.basis[i] = next_art;
                    next_art += 1;
                }
            }
        }
        let first_art = n + n_slack;

        if n_art > 0 {
            let mut cost = vec![0.0; cols + 1];
            cost[first_art..cols].iter_mut().for_each(|c| *c = 1.0);
            let mut obj = t.reduced(&cost);
            t.optimize(&mut obj, cols)?;
            if -obj[cols] > 1e-9 {
                return Ok(LpSolution::Infeasible);
            }
            t.drive_out_artificials(first_art);
        }

        let mut cost = vec![0.0; cols + 1];
        cost[..n].copy_from_slice(&self.objective);
        let mut obj = t.reduced(&cost);
        if !t.optimize(&mut obj, first_art)? {
            return Ok(LpSolution::Unbounded);
        }
        let mut x = vec![0.0; n];
        for (i, &b) in t.basis.iter().enumerate() {
            if b < n {
                x[b] = t.a[i][cols].max(0.0);
            }
        }
        let value = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution::Optimal { x, value })
    }
}

struct Tableau {
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    /// Objective row for `cost` with the basic columns eliminated; the last
    /// entry holds minus the current objective value.
    fn reduced(&self, cost: &[f64]) -> Vec<f64> {
        let mut obj = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = obj[b];
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(&self.a[i]) {
                    *o -= cb * v;
                }
            }
        }
        obj
    }

    fn pivot(&mut self, r: usize, c: usize, obj: &mut [f64]) {
        let p = self.a[r][c];
        self.a[r].iter_mut().for_each(|v| *v /= p);
        let row = self.a[r].clone();
        for (i, other) in self.a.iter_mut().enumerate() {
            if i != r {
                let f = other[c];
                if f != 0.0 {
                    for (v, rv) in other.iter_mut().zip(&row) {
                        *v -= f * rv;
                    }
                }
            }
        }
        let f = obj[c];
        if f != 0.0 {
            for (v, rv) in obj.iter_mut().zip(&row) {
                *v -= f * rv;
            }
        }
        self.basis[r] = c;
    }

    /// Runs primal simplex over the first `allowed` columns. Returns false
    /// when the objective is unbounded below.
    fn optimize(&mut self, obj: &mut [f64], allowed: usize) -> Result<bool> {
        let rhs = self.cols;
        for _ in 0..MAX_PIVOTS {
            let Some(c) = (0..allowed).find(|&j| obj[j] < -EPS) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.a.len() {
                let aij = self.a[i][c];
                if aij > EPS {
                    let ratio = self.a[i][rhs] / aij;
                    let better = match leave {
                        None => true,
                        Some((l, best)) => {
                            ratio < best - EPS || (ratio <= best + EPS && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, c, obj),
            }
        }
        Err(Error::LinearProgram("pivot limit reached".into()))
    }

    /// Pivots zero-level artificials out of the basis; rows where that is
    /// impossible are redundant and dropped.
    fn drive_out_artificials(&mut self, first_art: usize) {
        let mut i = 0;
        while i < self.a.len() {
            if self.basis[i] >= first_art {
                match (0..first_art).find(|&j| self.a[i][j].abs() > 1e-9) {
                    Some(j) => {
                        let mut dummy = vec![0.0; self.cols + 1];
                        self.pivot(i, j, &mut dummy);
                    }
                    None => {
                        self.a.remove(i);
                        self.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }
}
