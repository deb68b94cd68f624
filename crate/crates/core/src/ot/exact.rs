//! Exact Kantorovich OT by the transportation simplex method.

use std::collections::VecDeque;

use crate::cost::CostMatrix;
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::ot::TransportPlan;

/// Largest `d_src · d_dst` the exact solver accepts.
pub const EXACT_CAP: usize = 4096;

const MAX_PIVOTS: usize = 1_000_000;

/// Optimal cost and an optimal basic plan between `p` and `q`.
///
/// The plan has at most `|supp p| + |supp q| - 1` nonzero cells.
pub fn exact_ot_lp(p: &Distribution, q: &Distribution, cost: &CostMatrix) -> Result<(f64, TransportPlan)> {
    let n = cost.size();
    if p.schema() != cost.schema() || q.schema() != cost.schema() {
        return Err(Error::Shape("distributions and cost matrix disagree on schema".into()));
    }
    if n * n > EXACT_CAP {
        return Err(Error::SizeCap {
            size: n * n,
            cap: EXACT_CAP,
        });
    }
    let rows: Vec<usize> = p.support().collect();
    let cols: Vec<usize> = q.support().collect();
    let a: Vec<f64> = rows.iter().map(|&i| p.mass()[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| q.mass()[j]).collect();
    let c: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| cost.get(i, j)))
        .collect();

    let basis = Transportation::new(a, b, c).solve()?;

    let schema = p.schema().clone();
    let cells = basis
        .into_iter()
        .filter(|(_, _, x)| *x > 0.0)
        .map(|(r, s, x)| (rows[r], cols[s], x));
    let plan = TransportPlan::from_cells(schema.clone(), schema, cells)?;
    let total = crate::ot::transport_cost(&plan, cost)?;
    Ok((total, plan))
}

/// Balanced transportation problem over dense supplies and demands.
struct Transportation {
    m: usize,
    n: usize,
    c: Vec<f64>,
    /// Basic cells `(row, col, amount)`; always `m + n - 1` of them.
    basis: Vec<(usize, usize, f64)>,
}

impl Transportation {
    /// North-west corner start. Degenerate steps keep zero-valued cells in
    /// the basis so it stays a spanning tree.
    fn new(mut a: Vec<f64>, mut b: Vec<f64>, c: Vec<f64>) -> Self {
        let (m, n) = (a.len(), b.len());
        let mut basis = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let x = a[i].min(b[j]);
            basis.push((i, j, x));
            a[i] -= x;
            b[j] -= x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && a[i] <= b[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self { m, n, c, basis }
    }

    fn cost(&self, i: usize, j: usize) -> f64 {
        self.c[i * self.n + j]
    }

    /// Potentials with `u_i + v_j = c_ij` on basic cells, `u_0 = 0`.
    fn potentials(&self, adj: &[Vec<(usize, usize)>]) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let mut pot = vec![f64::NAN; m + n];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &(next, k) in &adj[node] {
                if pot[next].is_nan() {
                    let (i, j, _) = self.basis[k];
                    pot[next] = self.cost(i, j) - pot[node];
                    queue.push_back(next);
                }
            }
        }
        (pot[..m].to_vec(), pot[m..].to_vec())
    }

    /// Tree adjacency: node `i` is row `i`, node `m + j` is column `j`.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (k, &(i, j, _)) in self.basis.iter().enumerate() {
            adj[i].push((self.m + j, k));
            adj[self.m + j].push((i, k));
        }
        adj
    }

    /// Basic cells on the tree path from column `j` to row `i`, in order.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let mut via = vec![usize::MAX; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        seen[i] = true;
        let mut queue = VecDeque::from([i]);
        while let Some(node) = queue.pop_front() {
            for &(next, k) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    via[next] = k;
                    queue.push_back(next);
                }
            }
        }
        let mut out = Vec::new();
        let mut node = self.m + j;
        while node != i {
            let k = via[node];
            out.push(k);
            let (bi, bj, _) = self.basis[k];
            node = if node == bi { self.m + bj } else { bi };
        }
        out
    }

    fn solve(mut self) -> Result<Vec<(usize, usize, f64)>> {
        for _ in 0..MAX_PIVOTS {
            let adj = self.adjacency();
            let (u, v) = self.potentials(&adj);
            let mut in_basis = vec![false; self.m * self.n];
            for &(i, j, _) in &self.basis {
                in_basis[i * self.n + j] = true;
            }
            // Bland: first improving cell in row-major order.
            let entering = (0..self.m * self.n).find(|&k| {
                if in_basis[k] {
                    return false;
                }
                let (i, j) = (k / self.n, k % self.n);
                let c = self.cost(i, j);
                let reduced = c - u[i] - v[j];
                reduced < -1e-12 * (1.0 + c.abs() + u[i].abs() + v[j].abs())
            });
            let Some(k) = entering else {
                return Ok(self.basis);
            };
            let (ei, ej) = (k / self.n, k % self.n);
            let path = self.path(&adj, ei, ej);
            // Cells on the path alternate -, +, -, ... starting next to column ej.
            let minus: Vec<usize> = path.iter().step_by(2).copied().collect();
            let theta = minus
                .iter()
                .map(|&b| self.basis[b].2)
                .fold(f64::INFINITY, f64::min);
            let leaving = minus
                .iter()
                .copied()
                .filter(|&b| self.basis[b].2 == theta)
                .min_by_key(|&b| (self.basis[b].0, self.basis[b].1))
                .ok_or_else(|| Error::Internal("empty pivot cycle".into()))?;
            for (pos, &b) in path.iter().enumerate() {
                let x = &mut self.basis[b].2;
                if pos % 2 == 0 {
                    *x = (*x - theta).max(0.0);
                } else {
                    *x += theta;
                }
            }
            self.basis[leaving] = (ei, ej, theta);
        }
        Err(Error::Internal("transportation simplex exceeded its pivot budget".into()))
    }
}
