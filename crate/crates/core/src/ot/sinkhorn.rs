//! Entropic OT by matrix scaling, with exact or KL-relaxed marginals.
//!
//! The kernel is `K = exp(-rho * C)`, so larger `rho` means weaker
//! smoothing and plans closer to the unregularized optimum.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostMatrix;
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::ot::TransportPlan;

/// Floor applied to every denominator.
pub const DIV_FLOOR: f64 = 1e-300;
pub const MAX_RHO: f64 = 500.0;

/// Matrix-vector products switch to rayon above this many kernel cells.
const PAR_CELLS: usize = 1 << 15;

/// Relaxed solves over at most this many support rows plus columns finish
/// with Newton steps.
const NEWTON_CAP: usize = 1024;
/// Log-scaling change at which the relaxed solve hands over to Newton.
const NEWTON_SWITCH: f64 = 1e-4;
const NEWTON_STEPS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub rho: f64,
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Over-relaxation of the relaxed updates, in `[1, 2)`; 1 is plain
    /// scaling.
    pub omega: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            rho: 200.0,
            lambda: 1e3,
            tol: 1e-9,
            max_iter: 10_000,
            omega: 1.8,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= MAX_RHO) {
            return Err(Error::Validation(format!("rho must lie in (0, {MAX_RHO}], got {}", self.rho)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Validation(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Validation(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Validation("max_iter must be at least 1".into()));
        }
        if !(1.0..2.0).contains(&self.omega) {
            return Err(Error::Validation(format!("omega must lie in [1, 2), got {}", self.omega)));
        }
        Ok(())
    }

    /// Exponent of the relaxed updates.
    pub fn relaxed_exponent(&self) -> f64 {
        let rl = self.rho * self.lambda;
        rl / (rl + 1.0)
    }
}

/// Scaling vectors of a solve. Entries are zero exactly where the
/// corresponding marginal is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SinkhornOutput {
    pub plan: TransportPlan,
    pub state: ScalingState,
    pub iterations: usize,
    pub converged: bool,
}

/// Kernel rows restricted to the support of a fixed source marginal, so
/// repeated solves against changing targets reuse one kernel.
#[derive(Clone, Debug)]
pub struct EntropicSolver {
    p: Distribution,
    params: SolverParams,
    rows: Vec<usize>,
    cols: usize,
    kernel: Vec<f64>,
}

impl EntropicSolver {
    pub fn new(p: &Distribution, cost: &CostMatrix, params: SolverParams) -> Result<Self> {
        params.validate()?;
        if p.schema() != cost.schema() {
            return Err(Error::Shape("source distribution and cost matrix disagree on schema".into()));
        }
        let rows: Vec<usize> = p.support().collect();
        let cols = cost.size();
        let mut kernel = Vec::with_capacity(rows.len() * cols);
        for &i in &rows {
            kernel.extend(cost.row(i).iter().map(|c| (-params.rho * c).exp()));
        }
        Ok(Self {
            p: p.clone(),
            params,
            rows,
            cols,
            kernel,
        })
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    fn check_target(&self, q: &Distribution) -> Result<()> {
        if q.schema() != self.p.schema() {
            return Err(Error::Shape("target distribution is over another schema".into()));
        }
        let cols = self.cols;
        for (r, &i) in self.rows.iter().enumerate() {
            let row = &self.kernel[r * cols..(r + 1) * cols];
            if !row.iter().zip(q.mass()).any(|(k, m)| *k > 0.0 && *m > 0.0) {
                return Err(Error::Infeasible(format!(
                    "source cell {i} cannot reach any target cell: the kernel underflowed; reduce rho or rescale the cost"
                )));
            }
        }
        for (j, &m) in q.mass().iter().enumerate() {
            if m > 0.0 && !(0..self.rows.len()).any(|r| self.kernel[r * cols + j] > 0.0) {
                return Err(Error::Infeasible(format!(
                    "target cell {j} cannot be reached from any source cell: the kernel underflowed; reduce rho or rescale the cost"
                )));
            }
        }
        Ok(())
    }

    /// `(K v)` on the support rows.
    fn k_v(&self, v: &[f64]) -> Vec<f64> {
        let cols = self.cols;
        let dot = |r: usize| -> f64 {
            self.kernel[r * cols..(r + 1) * cols]
                .iter()
                .zip(v)
                .map(|(k, x)| k * x)
                .sum()
        };
        if self.kernel.len() >= PAR_CELLS {
            (0..self.rows.len()).into_par_iter().map(dot).collect()
        } else {
            (0..self.rows.len()).map(dot).collect()
        }
    }

    /// `(Kᵀ u)` where `us` holds u on the support rows.
    fn kt_u(&self, us: &[f64]) -> Vec<f64> {
        let cols = self.cols;
        let col = |j: usize| -> f64 {
            us.iter()
                .enumerate()
                .map(|(r, x)| self.kernel[r * cols + j] * x)
                .sum()
        };
        if self.kernel.len() >= PAR_CELLS {
            (0..cols).into_par_iter().map(col).collect()
        } else {
            (0..cols).map(col).collect()
        }
    }

    fn initial(&self, q: &Distribution, warm: Option<&ScalingState>) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.p.schema().size();
        match warm {
            Some(w) => {
                if w.u.len() != n || w.v.len() != n {
                    return Err(Error::Shape("warm-start state does not match the domain".into()));
                }
                if w.u.iter().chain(&w.v).any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::Validation("warm-start state must be finite and nonnegative".into()));
                }
                let us = self.rows.iter().map(|&i| w.u[i]).collect();
                Ok((us, w.v.clone()))
            }
            None => {
                let v = q.mass().iter().map(|m| if *m > 0.0 { 1.0 } else { 0.0 }).collect();
                Ok((vec![1.0; self.rows.len()], v))
            }
        }
    }

    /// Exact-marginal Sinkhorn iterations against target `q`.
    ///
    /// Stops when the scalings change by less than `tol` relatively, or when
    /// the plan's marginal violation drops below `tol`; on nearly decoupled
    /// blocks the scalings can keep drifting long after the plan settles.
    pub fn solve(&self, q: &Distribution, warm: Option<&ScalingState>) -> Result<SinkhornOutput> {
        self.check_target(q)?;
        let (mut us, mut v) = self.initial(q, warm)?;
        let ps: Vec<f64> = self.rows.iter().map(|&i| self.p.mass()[i]).collect();
        let qm = q.mass();
        let mut converged = false;
        let mut it = 0;
        while it < self.params.max_iter {
            it += 1;
            let kv = self.k_v(&v);
            // Columns of the current plan are exact after a v-update, so the
            // row gap is its whole marginal violation.
            if it > 1 {
                let gap = us
                    .iter()
                    .zip(&kv)
                    .zip(&ps)
                    .map(|((u, k), p)| (u * k - p).abs())
                    .fold(0.0, f64::max);
                if gap < self.params.tol {
                    converged = true;
                    it -= 1;
                    break;
                }
            }
            let un: Vec<f64> = ps.iter().zip(&kv).map(|(p, d)| p / d.max(DIV_FLOOR)).collect();
            let ktu = self.kt_u(&un);
            let vn: Vec<f64> = qm.iter().zip(&ktu).map(|(q, d)| q / d.max(DIV_FLOOR)).collect();
            let done = rel_change(&un, &us) < self.params.tol && rel_change(&vn, &v) < self.params.tol;
            us = un;
            v = vn;
            if done {
                converged = true;
                break;
            }
        }
        self.finish(us, v, it, converged)
    }

    /// Relaxed iterations `u = (p / K v)^a`, `v = (q / Kᵀ u)^a` with
    /// `a = rho·lambda / (rho·lambda + 1)`, run on log-scalings with
    /// over-relaxation `omega`.
    ///
    /// After each sweep the pair is rescaled by `(e^c, e^-c)`, with `c`
    /// chosen to balance the two KL penalties. The rescale vanishes at a
    /// fixed point of the updates, so it changes the speed, not the answer.
    ///
    /// On small domains the scaling phase stops early and damped Newton
    /// steps on the dual finish the solve. Plain scaling crawls along nearly
    /// decoupled blocks of the kernel, which Newton resolves in a few steps.
    pub fn solve_relaxed(&self, q: &Distribution, warm: Option<&ScalingState>) -> Result<SinkhornOutput> {
        self.check_target(q)?;
        let (us, v) = self.initial(q, warm)?;
        let a = self.params.relaxed_exponent();
        let theta = 1.0 / (self.params.rho * self.params.lambda);
        let omega = self.params.omega;
        let ln_p: Vec<f64> = self.rows.iter().map(|&i| self.p.mass()[i].ln()).collect();
        let ln_q: Vec<f64> = q.mass().iter().map(|m| m.ln()).collect();
        let mut lu: Vec<f64> = us.iter().map(|x| x.ln()).collect();
        let mut lv: Vec<f64> = v.iter().map(|x| x.ln()).collect();
        let step = |old: f64, target: f64| {
            if old.is_finite() {
                (1.0 - omega) * old + omega * target
            } else {
                target
            }
        };
        let polish = self.rows.len() + q.support().count() <= NEWTON_CAP;
        let switch = if polish { NEWTON_SWITCH.max(self.params.tol) } else { self.params.tol };
        let mut converged = false;
        let mut it = 0;
        while it < self.params.max_iter {
            it += 1;
            let kv = self.ln_k_v(&lv);
            let mut un: Vec<f64> = ln_p
                .iter()
                .zip(&kv)
                .zip(&lu)
                .map(|((p, k), old)| step(*old, a * (p - k)))
                .collect();
            let ktu = self.ln_kt_u(&un);
            let mut vn: Vec<f64> = ln_q
                .iter()
                .zip(&ktu)
                .zip(&lv)
                .map(|((q, k), old)| if q.is_finite() { step(*old, a * (q - k)) } else { f64::NEG_INFINITY })
                .collect();
            let c = gauge_shift(&ln_p, &un, &ln_q, &vn, theta);
            un.iter_mut().for_each(|x| *x += c);
            vn.iter_mut().filter(|x| x.is_finite()).for_each(|x| *x -= c);
            let change = log_change(&un, &lu).max(log_change(&vn, &lv));
            lu = un;
            lv = vn;
            if change < switch {
                converged = true;
                break;
            }
        }
        if polish {
            let (steps, ok) = self.newton(&mut lu, &mut lv, q);
            it += steps;
            converged = ok;
        }
        let us = lu.iter().map(|x| x.exp()).collect();
        let v = lv.iter().map(|x| x.exp()).collect();
        self.finish(us, v, it, converged)
    }

    /// Damped Newton on the convex dual
    /// `G = Σ p e^{-θ lu} / θ + Σ q e^{-θ lv} / θ + Σ_ij e^{lu_i} K_ij e^{lv_j}`,
    /// whose gradient is the gap between the plan's marginals and the
    /// relaxed targets. Returns the steps taken and whether the gradient
    /// fell below the tolerance.
    fn newton(&self, lu: &mut [f64], lv: &mut [f64], q: &Distribution) -> (usize, bool) {
        let theta = 1.0 / (self.params.rho * self.params.lambda);
        let ps: Vec<f64> = self.rows.iter().map(|&i| self.p.mass()[i]).collect();
        let cols: Vec<usize> = q.support().collect();
        let qs: Vec<f64> = cols.iter().map(|&j| q.mass()[j]).collect();
        let (nr, nc) = (ps.len(), cols.len());
        let target = (self.params.tol * 1e-3).max(1e-15);
        let plan = |lu: &[f64], lv: &[f64]| -> Vec<f64> {
            let mut pi = vec![0.0; nr * nc];
            for r in 0..nr {
                for (c, &j) in cols.iter().enumerate() {
                    let k = self.kernel[r * self.cols + j];
                    if k > 0.0 {
                        pi[r * nc + c] = k * (lu[r] + lv[j]).exp();
                    }
                }
            }
            pi
        };
        for step in 0..NEWTON_STEPS {
            let pi = plan(lu, lv);
            let su: Vec<f64> = ps.iter().zip(lu.iter()).map(|(p, x)| p * (-theta * x).exp()).collect();
            let sv: Vec<f64> = qs.iter().zip(&cols).map(|(q, &j)| q * (-theta * lv[j]).exp()).collect();
            let mut grad = vec![0.0; nr + nc];
            for r in 0..nr {
                for c in 0..nc {
                    grad[r] += pi[r * nc + c];
                    grad[nr + c] += pi[r * nc + c];
                }
            }
            let mut diag = grad.clone();
            for r in 0..nr {
                grad[r] -= su[r];
                diag[r] += theta * su[r];
            }
            for c in 0..nc {
                grad[nr + c] -= sv[c];
                diag[nr + c] += theta * sv[c];
            }
            if grad.iter().all(|g| g.abs() <= target) {
                return (step, true);
            }
            if !grad.iter().all(|g| g.is_finite()) {
                return (step, false);
            }
            let h = DMatrix::from_fn(nr + nc, nr + nc, |a, b| {
                if a == b {
                    diag[a]
                } else if a < nr && b >= nr {
                    pi[a * nc + b - nr]
                } else if b < nr && a >= nr {
                    pi[b * nc + a - nr]
                } else {
                    0.0
                }
            });
            let Some(chol) = h.cholesky() else {
                return (step, false);
            };
            let d = chol.solve(&DVector::from_iterator(nr + nc, grad.iter().map(|g| -g)));
            let slope: f64 = grad.iter().zip(d.iter()).map(|(g, x)| g * x).sum();
            if !(slope < 0.0) {
                return (step, false);
            }
            // Change of G along the step, summed termwise so that it stays
            // accurate when it is far below G itself.
            let delta = |t: f64| -> f64 {
                let mut s = 0.0;
                for r in 0..nr {
                    s += su[r] * (-theta * t * d[r]).exp_m1() / theta;
                    for c in 0..nc {
                        s += pi[r * nc + c] * (t * (d[r] + d[nr + c])).exp_m1();
                    }
                }
                for c in 0..nc {
                    s += sv[c] * (-theta * t * d[nr + c]).exp_m1() / theta;
                }
                s
            };
            let mut t = 1.0;
            while !(delta(t) <= 1e-4 * t * slope) {
                t *= 0.5;
                if t < 1e-12 {
                    return (step, false);
                }
            }
            for r in 0..nr {
                lu[r] += t * d[r];
            }
            for (c, &j) in cols.iter().enumerate() {
                lv[j] += t * d[nr + c];
            }
        }
        (NEWTON_STEPS, false)
    }

    /// `ln (K e^lv)` on the support rows, shifted to avoid overflow.
    fn ln_k_v(&self, lv: &[f64]) -> Vec<f64> {
        let m = lv.iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        let ev: Vec<f64> = lv.iter().map(|x| (x - m).exp()).collect();
        self.k_v(&ev).into_iter().map(|s| m + s.max(DIV_FLOOR).ln()).collect()
    }

    /// `ln (Kᵀ e^lu)` for `lu` on the support rows.
    fn ln_kt_u(&self, lu: &[f64]) -> Vec<f64> {
        let m = lu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let eu: Vec<f64> = lu.iter().map(|x| (x - m).exp()).collect();
        self.kt_u(&eu).into_iter().map(|s| m + s.max(DIV_FLOOR).ln()).collect()
    }

    fn finish(&self, us: Vec<f64>, v: Vec<f64>, iterations: usize, converged: bool) -> Result<SinkhornOutput> {
        if us.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::Infeasible(
                "scaling vectors overflowed; reduce rho or rescale the cost".into(),
            ));
        }
        let n = self.p.schema().size();
        let cols = self.cols;
        let mut mass = vec![0.0; n * cols];
        let mut u = vec![0.0; n];
        for (r, &i) in self.rows.iter().enumerate() {
            u[i] = us[r];
            let krow = &self.kernel[r * cols..(r + 1) * cols];
            for (j, cell) in mass[i * cols..(i + 1) * cols].iter_mut().enumerate() {
                *cell = us[r] * krow[j] * v[j];
            }
        }
        let schema = self.p.schema().clone();
        let plan = TransportPlan::from_raw(schema.clone(), schema, mass)?;
        Ok(SinkhornOutput {
            plan,
            state: ScalingState { u, v },
            iterations,
            converged,
        })
    }
}

/// Largest relative change between two nonnegative iterates.
fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    new.iter()
        .zip(old)
        .filter(|(a, b)| **a > 0.0 || **b > 0.0)
        .map(|(a, b)| (a - b).abs() / a.max(*b))
        .fold(0.0, f64::max)
}

/// Log-domain shift `c` equalizing `Σ p u^-θ e^{-cθ}` and `Σ q v^-θ e^{cθ}`,
/// with every argument given as a logarithm.
fn gauge_shift(ln_p: &[f64], lu: &[f64], ln_q: &[f64], lv: &[f64], theta: f64) -> f64 {
    let lse = |w: &[f64], x: &[f64]| -> f64 {
        let terms: Vec<f64> = w
            .iter()
            .zip(x)
            .filter(|(m, s)| m.is_finite() && s.is_finite())
            .map(|(m, s)| m - theta * s)
            .collect();
        let hi = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !hi.is_finite() {
            return hi;
        }
        hi + terms.iter().map(|t| (t - hi).exp()).sum::<f64>().ln()
    };
    let (lp, lq) = (lse(ln_p, lu), lse(ln_q, lv));
    if !lp.is_finite() || !lq.is_finite() {
        return 0.0;
    }
    // Keep one step from overflowing; later sweeps finish the shift.
    ((lp - lq) / (2.0 * theta)).clamp(-50.0, 50.0)
}

/// Largest absolute change between two log-scaling vectors.
fn log_change(new: &[f64], old: &[f64]) -> f64 {
    new.iter()
        .zip(old)
        .filter(|(a, b)| a.is_finite() || b.is_finite())
        .map(|(a, b)| if a.is_finite() && b.is_finite() { (a - b).abs() } else { f64::INFINITY })
        .fold(0.0, f64::max)
}

/// Exact-marginal entropic OT between `p` and `q`.
pub fn sinkhorn(
    p: &Distribution,
    q: &Distribution,
    cost: &CostMatrix,
    params: SolverParams,
    warm: Option<&ScalingState>,
) -> Result<SinkhornOutput> {
    EntropicSolver::new(p, cost, params)?.solve(q, warm)
}

/// Entropic OT with KL-penalized marginals.
pub fn sinkhorn_relaxed(
    p: &Distribution,
    q: &Distribution,
    cost: &CostMatrix,
    params: SolverParams,
    warm: Option<&ScalingState>,
) -> Result<SinkhornOutput> {
    EntropicSolver::new(p, cost, params)?.solve_relaxed(q, warm)
}

/// Rescales the rows and columns of a nonnegative `rows × cols` matrix
/// until its marginals equal `a` and `b`.
pub(crate) fn fit_marginals(
    mat: &mut [f64],
    cols: usize,
    a: &[f64],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<()> {
    for _ in 0..max_iter {
        for (row, &target) in mat.chunks_mut(cols).zip(a) {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|x| *x *= target / s);
            } else if target > 0.0 {
                return Err(Error::MarginalMismatch("a row with positive target mass is empty".into()));
            }
        }
        let mut colsum = vec![0.0; cols];
        for row in mat.chunks(cols) {
            for (c, x) in colsum.iter_mut().zip(row) {
                *c += x;
            }
        }
        let mut worst: f64 = 0.0;
        for (j, (&s, &target)) in colsum.iter().zip(b).enumerate() {
            if s > 0.0 {
                let f = target / s;
                for row in mat.chunks_mut(cols) {
                    row[j] *= f;
                }
                worst = worst.max((s - target).abs());
            } else if target > 0.0 {
                return Err(Error::MarginalMismatch("a column with positive target mass is empty".into()));
            }
        }
        let row_gap = mat
            .chunks(cols)
            .zip(a)
            .map(|(r, t)| (r.iter().sum::<f64>() - t).abs())
            .fold(0.0, f64::max);
        if worst.max(row_gap) < tol {
            return Ok(());
        }
    }
    Err(Error::MarginalMismatch("marginal fitting did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{build_cost_matrix, CostSpec};
    use crate::dist::Schema;

    fn flat(n: usize) -> Schema {
        Schema::flat(n).unwrap()
    }

    fn swap_cost() -> CostMatrix {
        CostMatrix::from_entries(flat(2), vec![0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    fn params(rho: f64) -> SolverParams {
        SolverParams {
            rho,
            ..SolverParams::default()
        }
    }

    #[test]
    fn one_cell_identity() {
        let s = flat(1);
        let p = Distribution::point_mass(s.clone(), 0).unwrap();
        let c = CostMatrix::from_entries(s, vec![0.0]).unwrap();
        let out = sinkhorn(&p, &p, &c, SolverParams::default(), None).unwrap();
        assert_eq!(out.plan.mass(), &[1.0]);
        assert_eq!(out.iterations, 1);
        let rel = sinkhorn_relaxed(&p, &p, &c, SolverParams::default(), None).unwrap();
        assert_eq!(rel.plan.mass(), &[1.0]);
    }

    #[test]
    fn two_point_swap_is_diagonal() {
        let p = Distribution::uniform(flat(2));
        let out = sinkhorn(&p, &p, &swap_cost(), params(200.0), None).unwrap();
        assert!(out.converged);
        assert!((out.plan.get(0, 0) - 0.5).abs() < 1e-3);
        assert!(out.plan.get(0, 1) < 1e-3 && out.plan.get(1, 0) < 1e-3);
    }

    #[test]
    fn marginals_hold_at_convergence() {
        let s = flat(3);
        let p = Distribution::new(s.clone(), vec![0.2, 0.5, 0.3]).unwrap();
        let q = Distribution::new(s.clone(), vec![0.6, 0.1, 0.3]).unwrap();
        let c = build_cost_matrix(&s, &CostSpec::hamming()).unwrap();
        let out = sinkhorn(&p, &q, &c, params(50.0), None).unwrap();
        assert!(out.converged);
        let rows = out.plan.src_marginal();
        let cols = out.plan.dst_marginal();
        for k in 0..3 {
            assert!((rows[k] - p.mass()[k]).abs() <= 1e-6);
            assert!((cols[k] - q.mass()[k]).abs() <= 1e-6);
        }
    }

    #[test]
    fn relaxed_close_to_exact_for_large_lambda() {
        let s = flat(2);
        let p = Distribution::new(s.clone(), vec![0.3, 0.7]).unwrap();
        let q = Distribution::new(s.clone(), vec![0.55, 0.45]).unwrap();
        let c = CostMatrix::from_entries(s, vec![0.0, 0.8, 0.5, 0.0]).unwrap();
        let prm = SolverParams {
            rho: 50.0,
            lambda: 1e3,
            ..SolverParams::default()
        };
        let exact = sinkhorn(&p, &q, &c, prm, None).unwrap();
        let relaxed = sinkhorn_relaxed(&p, &q, &c, prm, None).unwrap();
        assert!(relaxed.converged);
        for (a, b) in exact.plan.src_marginal().iter().zip(relaxed.plan.src_marginal()) {
            assert!((a - b).abs() < 1e-3);
        }
        for (a, b) in exact.plan.dst_marginal().iter().zip(relaxed.plan.dst_marginal()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn tiny_lambda_follows_kernel() {
        // With exponent ≈ 0 both scalings stay ≈ 1, so the plan is ∝ K.
        let s = flat(2);
        let p = Distribution::new(s.clone(), vec![0.9, 0.1]).unwrap();
        let q = Distribution::new(s.clone(), vec![0.1, 0.9]).unwrap();
        let c = CostMatrix::from_entries(s, vec![0.0, 0.01, 0.01, 0.0]).unwrap();
        let prm = SolverParams {
            rho: 10.0,
            lambda: 1e-6,
            ..SolverParams::default()
        };
        let out = sinkhorn_relaxed(&p, &q, &c, prm, None).unwrap();
        let k = (-0.1f64).exp();
        let z = 2.0 + 2.0 * k;
        assert!((out.plan.get(0, 0) - 1.0 / z).abs() < 1e-3);
        assert!((out.plan.get(0, 1) - k / z).abs() < 1e-3);
        assert!((out.plan.src_marginal()[0] - 0.9).abs() > 0.3);
    }

    #[test]
    fn relaxed_state_is_a_fixed_point_of_the_plain_updates() {
        let s = Schema::binary(&["X", "Y", "Z"]);
        let c = build_cost_matrix(&s, &CostSpec::hamming()).unwrap();
        let p = Distribution::from_weights(s.clone(), vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 0.0]).unwrap();
        let q = Distribution::new(s.clone(), vec![0.0, 0.0, 0.0, 0.0, 0.375, 0.125, 0.375, 0.125]).unwrap();
        let prm = SolverParams::default();
        let solver = EntropicSolver::new(&p, &c, prm).unwrap();
        let out = solver.solve_relaxed(&q, None).unwrap();
        assert!(out.converged);
        let a = prm.relaxed_exponent();
        let (u, v) = (&out.state.u, &out.state.v);
        let k = |i: usize, j: usize| (-prm.rho * c.get(i, j)).exp();
        for i in 0..8 {
            if p.mass()[i] > 0.0 {
                let kv: f64 = (0..8).map(|j| k(i, j) * v[j]).sum();
                let next = (p.mass()[i] / kv).powf(a);
                assert!((next / u[i] - 1.0).abs() < 1e-7, "u[{i}]");
            }
        }
        for j in 0..8 {
            if q.mass()[j] > 0.0 {
                let ktu: f64 = (0..8).map(|i| k(i, j) * u[i]).sum();
                let next = (q.mass()[j] / ktu).powf(a);
                assert!((next / v[j] - 1.0).abs() < 1e-7, "v[{j}]");
            }
        }
    }

    #[test]
    fn underflowed_kernel_is_infeasible() {
        let s = flat(2);
        let p = Distribution::point_mass(s.clone(), 0).unwrap();
        let q = Distribution::point_mass(s.clone(), 1).unwrap();
        let c = CostMatrix::from_entries(s, vec![0.0, 1e9, 1e9, 0.0]).unwrap();
        assert!(matches!(
            sinkhorn(&p, &q, &c, SolverParams::default(), None),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn rejects_bad_params() {
        for prm in [
            SolverParams { rho: 0.0, ..Default::default() },
            SolverParams { rho: 501.0, ..Default::default() },
            SolverParams { lambda: 0.0, ..Default::default() },
            SolverParams { tol: 0.0, ..Default::default() },
            SolverParams { max_iter: 0, ..Default::default() },
        ] {
            assert!(prm.validate().is_err());
        }
    }

    #[test]
    fn non_convergence_is_flagged() {
        let s = flat(3);
        let p = Distribution::new(s.clone(), vec![0.2, 0.5, 0.3]).unwrap();
        let q = Distribution::new(s.clone(), vec![0.6, 0.1, 0.3]).unwrap();
        let c = CostMatrix::from_entries(s, vec![0.0, 0.4, 1.3, 0.7, 0.0, 0.2, 0.9, 1.1, 0.0]).unwrap();
        let prm = SolverParams {
            max_iter: 2,
            ..SolverParams::default()
        };
        let out = sinkhorn(&p, &q, &c, prm, None).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }

    #[test]
    fn fit_marginals_matches_targets() {
        let mut m = vec![0.3, 0.1, 0.2, 0.4];
        fit_marginals(&mut m, 2, &[0.5, 0.5], &[0.25, 0.75], 1e-13, 10_000).unwrap();
        assert!((m[0] + m[1] - 0.5).abs() < 1e-12);
        assert!((m[0] + m[2] - 0.25).abs() < 1e-12);
    }
}
