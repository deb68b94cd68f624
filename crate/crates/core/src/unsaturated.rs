//! Repair under a constraint that leaves some attributes unmentioned: solve
//! on the constrained attributes U, then lift the plan back to U × W.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostMatrix;
use crate::dist::{CiConstraint, CiLayout, Distribution, Schema};
use crate::error::{Error, Result};
use crate::fastotclean::{fast_otclean, CleanerConfig, CleanerResult};
use crate::ot::{fit_marginals, TransportPlan};

/// Source marginals of a plan must match the input this closely.
pub const MARGINAL_TOL: f64 = 1e-9;
const EXHAUSTED: f64 = 1e-15;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lift {
    /// Spread each move over W in proportion to `P(w | u)`.
    #[default]
    Product,
    /// Deterministic sweep filling moves from the lowest W value first.
    Greedy,
}

impl std::str::FromStr for Lift {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(Self::Product),
            "greedy" => Ok(Self::Greedy),
            other => Err(Error::Validation(format!("unknown lift `{other}` (product or greedy)"))),
        }
    }
}

/// Split of a schema into constrained attributes U and the rest W.
#[derive(Clone, Debug)]
pub struct SplitSchema {
    pub full: Schema,
    pub u: Schema,
    pub w: Schema,
    /// `cell[u * |W| + w]` is the joint index of `(u, w)`.
    cell: Vec<usize>,
    layout: CiLayout,
}

impl SplitSchema {
    pub fn new(schema: &Schema, sigma: &CiConstraint) -> Result<Self> {
        let layout = CiLayout::new(schema, sigma)?;
        let Some(w) = layout.w_schema.clone() else {
            return Err(Error::Misuse(
                "constraint mentions every attribute; use the saturated repair".into(),
            ));
        };
        let dw = w.size();
        let mut cell = vec![0; schema.size()];
        for i in 0..schema.size() {
            cell[layout.u_of[i] * dw + layout.w_of[i]] = i;
        }
        Ok(Self {
            full: schema.clone(),
            u: layout.u_schema.clone(),
            w,
            cell,
            layout,
        })
    }

    pub fn index(&self, u: usize, w: usize) -> usize {
        self.cell[u * self.w.size() + w]
    }

    pub fn u_of(&self, i: usize) -> usize {
        self.layout.u_of[i]
    }

    pub fn w_of(&self, i: usize) -> usize {
        self.layout.w_of[i]
    }

    /// `P(u, w)` arranged as `[u][w]`.
    fn joint(&self, p: &Distribution) -> Vec<Vec<f64>> {
        let dw = self.w.size();
        (0..self.u.size())
            .map(|u| (0..dw).map(|w| p.mass()[self.index(u, w)]).collect())
            .collect()
    }

    fn check(&self, p: &Distribution, plan: &TransportPlan) -> Result<Vec<Vec<f64>>> {
        if p.schema() != &self.full {
            return Err(Error::Shape("distribution is over another schema".into()));
        }
        if plan.src_schema() != &self.u || plan.dst_schema() != &self.u {
            return Err(Error::Shape("plan must map the constrained attributes to themselves".into()));
        }
        let joint = self.joint(p);
        let gap = joint
            .iter()
            .zip(plan.src_marginal())
            .map(|(row, m)| (row.iter().sum::<f64>() - m).abs())
            .fold(0.0, f64::max);
        if gap > MARGINAL_TOL {
            return Err(Error::MarginalMismatch(format!(
                "plan source marginal differs from P_U by {gap:.3e}"
            )));
        }
        Ok(joint)
    }
}

/// `π((u,w), (u',w')) = [w = w'] · π_U(u, u') · P(w | u)`.
pub fn lift_product(p: &Distribution, plan_u: &TransportPlan, split: &SplitSchema) -> Result<TransportPlan> {
    let joint = split.check(p, plan_u)?;
    let n = split.full.size();
    let du = split.u.size();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (u, w) = (split.u_of(i), split.w_of(i));
            let pu: f64 = joint[u].iter().sum();
            let pi = p.mass()[i];
            if pi <= 0.0 || pu <= 0.0 {
                return Vec::new();
            }
            (0..du)
                .filter_map(|v| {
                    let m = plan_u.get(u, v);
                    (m > 0.0).then(|| (split.index(v, w), m * pi / pu))
                })
                .collect()
        })
        .collect();
    let cells = rows
        .into_iter()
        .enumerate()
        .flat_map(|(i, r)| r.into_iter().map(move |(j, m)| (i, j, m)));
    TransportPlan::from_cells(split.full.clone(), split.full.clone(), cells)
}

/// Greedy lift: for each source `u`, walk the W values in ascending order
/// and hand out `P(u, w)` to the destinations of `u`, visiting `u` itself
/// first and the others in ascending order. W values never change.
pub fn build_coupling_greedy(
    p: &Distribution,
    plan_u: &TransportPlan,
    split: &SplitSchema,
) -> Result<TransportPlan> {
    let joint = split.check(p, plan_u)?;
    let du = split.u.size();
    let dw = split.w.size();
    let mut cells = Vec::new();
    for (u, row) in joint.iter().enumerate() {
        let mut supply = row.clone();
        let mut c = 0;
        let order = std::iter::once(u).chain((0..du).filter(|&v| v != u));
        for v in order {
            let mut demand = plan_u.get(u, v);
            while demand > EXHAUSTED {
                while c < dw && supply[c] <= EXHAUSTED {
                    c += 1;
                }
                if c == dw {
                    if demand > MARGINAL_TOL {
                        return Err(Error::Internal(format!(
                            "greedy lift ran out of mass for source {u} ({demand:.3e} left)"
                        )));
                    }
                    break;
                }
                let t = demand.min(supply[c]);
                cells.push((split.index(u, c), split.index(v, c), t));
                demand -= t;
                supply[c] -= t;
            }
        }
    }
    TransportPlan::from_cells(split.full.clone(), split.full.clone(), cells)
}

/// Output of [`repair_unsaturated`].
#[derive(Clone, Debug)]
pub struct UnsaturatedResult {
    /// Plan over the full schema.
    pub plan: TransportPlan,
    pub target: Distribution,
    /// Plan over U, rebalanced to exact marginals before lifting.
    pub plan_u: TransportPlan,
    /// The solve on U.
    pub inner: CleanerResult,
}

/// Runs the cleaner on the U-marginal with `cost_u`, rebalances the plan to
/// `(P_U, Q_U)` and lifts it to the full schema.
pub fn repair_unsaturated(
    p: &Distribution,
    sigma: &CiConstraint,
    cost_u: &CostMatrix,
    cfg: &CleanerConfig,
    lift: Lift,
) -> Result<UnsaturatedResult> {
    let split = SplitSchema::new(p.schema(), sigma)?;
    if cost_u.schema() != &split.u {
        return Err(Error::Shape("cost matrix must be over the constrained attributes".into()));
    }
    let names = split.u.names();
    let p_u = p.marginalize(&names)?;
    let inner = fast_otclean(&p_u, cost_u, sigma, cfg)?;
    let plan_u = rebalance(&inner.plan, &p_u, &inner.target)?;
    let plan = match lift {
        Lift::Product => lift_product(p, &plan_u, &split)?,
        Lift::Greedy => build_coupling_greedy(p, &plan_u, &split)?,
    };
    let target = plan.target()?;
    Ok(UnsaturatedResult {
        plan,
        target,
        plan_u,
        inner,
    })
}

/// Moves a relaxed plan onto the exact marginals `a` and `b`: a bounded
/// proportional-fitting pass, then rounding (shrink rows and columns that
/// exceed their target, spread the leftover deficit as a rank-one term).
pub fn rebalance(plan: &TransportPlan, a: &Distribution, b: &Distribution) -> Result<TransportPlan> {
    let cols = plan.cols();
    let (a, b) = (a.mass(), b.mass());
    let mut mass = plan.mass().to_vec();
    if fit_marginals(&mut mass, cols, a, b, 1e-13, 2_000).is_err() {
        mass = plan.mass().to_vec();
    }
    for (row, &t) in mass.chunks_mut(cols).zip(a) {
        let s: f64 = row.iter().sum();
        if s > t {
            row.iter_mut().for_each(|x| *x *= t / s);
        }
    }
    let mut colsum = vec![0.0; cols];
    for row in mass.chunks(cols) {
        colsum.iter_mut().zip(row).for_each(|(c, x)| *c += x);
    }
    let shrink: Vec<f64> = colsum
        .iter()
        .zip(b)
        .map(|(&s, &t)| if s > t { t / s } else { 1.0 })
        .collect();
    for row in mass.chunks_mut(cols) {
        row.iter_mut().zip(&shrink).for_each(|(x, f)| *x *= f);
    }
    let err_a: Vec<f64> = mass
        .chunks(cols)
        .zip(a)
        .map(|(row, t)| (t - row.iter().sum::<f64>()).max(0.0))
        .collect();
    let mut err_b = b.to_vec();
    for row in mass.chunks(cols) {
        err_b.iter_mut().zip(row).for_each(|(e, x)| *e -= x);
    }
    err_b.iter_mut().for_each(|e| *e = e.max(0.0));
    let total: f64 = err_a.iter().sum();
    if total > 0.0 {
        for (row, ea) in mass.chunks_mut(cols).zip(&err_a) {
            row.iter_mut().zip(&err_b).for_each(|(x, eb)| *x += ea * eb / total);
        }
    }
    TransportPlan::from_raw(plan.src_schema().clone(), plan.dst_schema().clone(), mass)
}
