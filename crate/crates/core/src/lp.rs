//! Dense two-phase tableau simplex for `min c·x  s.t.  A x = b, x ≥ 0`.
//!
//! Bland's rule is used for both entering and leaving choices, so the
//! method terminates on degenerate problems. Intended for desk-sized
//! programs only.

use crate::error::{Error, Result};

/// Largest number of variables accepted.
pub const LP_CAP: usize = 4096;

const EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

/// Equality-form linear program with a dense constraint matrix.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub cost: Vec<f64>,
    /// One dense row per equality constraint.
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LinearProgram {
    pub fn new(cost: Vec<f64>) -> Self {
        Self {
            n_vars: cost.len(),
            cost,
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    /// Adds `Σ coef·x_var = rhs` from sparse `(var, coef)` pairs.
    pub fn add_eq(&mut self, terms: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let mut row = vec![0.0; self.n_vars];
        for (j, a) in terms {
            row[j] += a;
        }
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    /// Largest `|A x - b|` entry.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| (row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn solve(&self) -> Result<LpSolution> {
        if self.n_vars > LP_CAP {
            return Err(Error::SizeCap {
                size: self.n_vars,
                cap: LP_CAP,
            });
        }
        if self.cost.len() != self.n_vars || self.rows.iter().any(|r| r.len() != self.n_vars) {
            return Err(Error::Shape("linear program rows disagree with the variable count".into()));
        }
        Tableau::phase_one(self)?.phase_two(self)
    }
}

struct Tableau {
    /// `m` constraint rows of width `width + 1` (last column is the rhs).
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n: usize,
    width: usize,
    pivots: usize,
}

impl Tableau {
    fn phase_one(lp: &LinearProgram) -> Result<Self> {
        let (m, n) = (lp.rows.len(), lp.n_vars);
        let width = n + m;
        let mut t = Vec::with_capacity(m);
        for (r, (row, &b)) in lp.rows.iter().zip(&lp.rhs).enumerate() {
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            let mut line: Vec<f64> = row.iter().map(|a| a * sign).collect();
            line.resize(width + 1, 0.0);
            line[n + r] = 1.0;
            line[width] = b * sign;
            t.push(line);
        }
        let mut tab = Self {
            t,
            basis: (n..n + m).collect(),
            n,
            width,
            pivots: 0,
        };
        let phase1_cost: Vec<f64> = (0..width).map(|j| if j >= n { 1.0 } else { 0.0 }).collect();
        tab.optimize(&phase1_cost, width)?;
        let infeasibility: f64 = tab
            .basis
            .iter()
            .zip(&tab.t)
            .filter(|(b, _)| **b >= n)
            .map(|(_, row)| row[width])
            .sum();
        let scale = 1.0 + lp.rhs.iter().map(|b| b.abs()).fold(0.0, f64::max);
        if infeasibility > 1e-9 * scale {
            return Err(Error::Infeasible(format!(
                "linear program has no feasible point (phase-one residual {infeasibility:.3e})"
            )));
        }
        tab.evict_artificials();
        Ok(tab)
    }

    /// Pivots artificials out of the basis; rows where that is impossible
    /// are redundant and dropped.
    fn evict_artificials(&mut self) {
        let mut r = 0;
        while r < self.t.len() {
            if self.basis[r] < self.n {
                r += 1;
                continue;
            }
            match (0..self.n).find(|&j| self.t[r][j].abs() > 1e-9) {
                Some(j) => {
                    self.pivot(r, j);
                    r += 1;
                }
                None => {
                    self.t.remove(r);
                    self.basis.remove(r);
                }
            }
        }
    }

    fn phase_two(mut self, lp: &LinearProgram) -> Result<LpSolution> {
        let mut cost = lp.cost.clone();
        cost.resize(self.width, 0.0);
        // Artificials may no longer enter.
        self.optimize(&cost, self.n)?;
        let mut x = vec![0.0; self.n];
        for (row, &b) in self.t.iter().zip(&self.basis) {
            if b < self.n {
                x[b] = row[self.width].max(0.0);
            }
        }
        let objective = x.iter().zip(&lp.cost).map(|(a, c)| a * c).sum();
        Ok(LpSolution {
            x,
            objective,
            pivots: self.pivots,
        })
    }

    /// Bland-rule simplex over columns `0..allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<()> {
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Internal("simplex exceeded its pivot budget".into()));
            }
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced = cost[j]
                    - self
                        .t
                        .iter()
                        .zip(&self.basis)
                        .map(|(row, &b)| cost[b] * row[j])
                        .sum::<f64>();
                reduced < -EPS * (1.0 + cost[j].abs())
            });
            let Some(j) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.t.iter().enumerate() {
                let a = row[j];
                if a > 1e-12 {
                    let ratio = row[self.width] / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((best, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.basis[r] < self.basis[best] {
                                Some((r, ratio))
                            } else {
                                Some((best, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Internal("linear program is unbounded".into()));
            };
            self.pivot(r, j);
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        self.pivots += 1;
        let p = self.t[r][j];
        self.t[r].iter_mut().for_each(|x| *x /= p);
        let pivot_row = self.t[r].clone();
        for (k, row) in self.t.iter_mut().enumerate() {
            if k == r {
                continue;
            }
            let f = row[j];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
                row[j] = 0.0;
            }
        }
        self.basis[r] = j;
    }
}
