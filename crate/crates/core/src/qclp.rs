//! The exact repair program: a transport plan from the active rows of `P`
//! whose target marginal satisfies the constraint. The independence
//! constraints are bilinear; they are handled by freezing one conditional
//! profile at a time, which leaves a linear program.

use serde::Serialize;

use crate::cost::CostMatrix;
use crate::dist::{CiConstraint, CiLayout, Distribution};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LP_CAP};
use crate::ot::TransportPlan;

#[derive(Clone, Debug)]
pub struct QclpProgram {
    /// Source joint indices with positive mass, one per plan row.
    pub rows: Vec<usize>,
    pub n_cols: usize,
    /// Row-major objective coefficients, `rows.len() × n_cols`.
    pub cost: Vec<f64>,
    pub marginals: Vec<f64>,
    pub sigma: CiConstraint,
    layout: CiLayout,
    schema: crate::dist::Schema,
}

#[derive(Serialize)]
struct ProgramDump<'a> {
    grid: [usize; 2],
    rows: &'a [usize],
    objective: Vec<(usize, f64)>,
    validity_constraints: usize,
    marginal: Triplets,
    /// Cell `(x, y, z)` of each plan column; the independence constraint of
    /// cell `c` reads `Q(c) Q(z) = Q(x, z) Q(y, z)` with `Q` the column sums.
    column_cells: Vec<[usize; 3]>,
    independence_cells: usize,
}

#[derive(Serialize)]
struct Triplets {
    entries: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
}

impl QclpProgram {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_vars(&self) -> usize {
        self.rows.len() * self.n_cols
    }

    pub fn validity_count(&self) -> usize {
        self.n_vars()
    }

    pub fn marginal_count(&self) -> usize {
        self.rows.len()
    }

    pub fn independence_count(&self) -> usize {
        self.layout.dx * self.layout.dy * self.layout.dz
    }

    /// Debug dump with constraint matrices as sparse triplets.
    pub fn to_json(&self) -> Result<String> {
        let marginal = Triplets {
            entries: (0..self.n_rows())
                .flat_map(|r| (0..self.n_cols).map(move |j| (r, r * self.n_cols + j, 1.0)))
                .collect(),
            rhs: self.marginals.clone(),
        };
        let dump = ProgramDump {
            grid: [self.n_rows(), self.n_cols],
            rows: &self.rows,
            objective: self
                .cost
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(k, c)| (k, *c))
                .collect(),
            validity_constraints: self.validity_count(),
            marginal,
            column_cells: (0..self.n_cols)
                .map(|j| [self.layout.x_of[j], self.layout.y_of[j], self.layout.z_of[j]])
                .collect(),
            independence_cells: self.independence_count(),
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }

    fn cell(&self, j: usize) -> (usize, usize, usize) {
        (self.layout.x_of[j], self.layout.y_of[j], self.layout.z_of[j])
    }

    /// `Q(x, y, z)` of a column-mass vector, as `[z][x·dy + y]`.
    fn slices(&self, q: &[f64]) -> Vec<Vec<f64>> {
        self.layout.slices(q)
    }

    /// Largest `|Q(x,y,z) Q(z) - Q(x,z) Q(y,z)|` over all cells.
    pub fn independence_residual(&self, q: &[f64]) -> f64 {
        let (dx, dy) = (self.layout.dx, self.layout.dy);
        let mut worst: f64 = 0.0;
        for s in self.slices(q) {
            let qz: f64 = s.iter().sum();
            for x in 0..dx {
                let qxz: f64 = (0..dy).map(|y| s[x * dy + y]).sum();
                for y in 0..dy {
                    let qyz: f64 = (0..dx).map(|a| s[a * dy + y]).sum();
                    worst = worst.max((s[x * dy + y] * qz - qxz * qyz).abs());
                }
            }
        }
        worst
    }

    fn base_lp(&self) -> LinearProgram {
        let mut lp = LinearProgram::new(self.cost.clone());
        for (r, &m) in self.marginals.iter().enumerate() {
            lp.add_eq((0..self.n_cols).map(|j| (r * self.n_cols + j, 1.0)), m);
        }
        lp
    }

    /// Plain transport LP from the active rows to the column marginal `q`.
    pub fn transport_lp(&self, q: &[f64]) -> LinearProgram {
        let mut lp = self.base_lp();
        for (j, &m) in q.iter().enumerate() {
            lp.add_eq((0..self.n_rows()).map(|r| (r * self.n_cols + j, 1.0)), m);
        }
        lp
    }

    /// LP with the conditional profile of one side frozen from `q`.
    ///
    /// With `Freeze::YGivenZ` the constraint for cell `(x, y, z)` reads
    /// `Q(x, y, z) - h(y | z) Σ_y' Q(x, y', z) = 0`; `Freeze::XGivenZ` is
    /// the mirror image. A slice without mass gets a uniform profile.
    pub fn linearized_lp(&self, q: &[f64], freeze: Freeze) -> LinearProgram {
        let (dx, dy, dz) = (self.layout.dx, self.layout.dy, self.layout.dz);
        let slices = self.slices(q);
        let profile: Vec<Vec<f64>> = slices
            .iter()
            .map(|s| {
                let (len, marg): (usize, Vec<f64>) = match freeze {
                    Freeze::YGivenZ => (dy, (0..dy).map(|y| (0..dx).map(|x| s[x * dy + y]).sum()).collect()),
                    Freeze::XGivenZ => (dx, (0..dx).map(|x| s[x * dy..(x + 1) * dy].iter().sum()).collect()),
                };
                let total: f64 = marg.iter().sum();
                if total > 0.0 {
                    marg.into_iter().map(|m| m / total).collect()
                } else {
                    vec![1.0 / len as f64; len]
                }
            })
            .collect();
        let mut lp = self.base_lp();
        // Variables grouped by (x, y, z) cell of their column.
        let mut by_cell: Vec<Vec<usize>> = vec![Vec::new(); dx * dy * dz];
        for j in 0..self.n_cols {
            let (x, y, z) = self.cell(j);
            for r in 0..self.n_rows() {
                by_cell[(z * dx + x) * dy + y].push(r * self.n_cols + j);
            }
        }
        for z in 0..dz {
            for x in 0..dx {
                for y in 0..dy {
                    let mut terms: Vec<(usize, f64)> =
                        by_cell[(z * dx + x) * dy + y].iter().map(|&k| (k, 1.0)).collect();
                    match freeze {
                        Freeze::YGivenZ => {
                            for y2 in 0..dy {
                                let f = profile[z][y];
                                terms.extend(by_cell[(z * dx + x) * dy + y2].iter().map(|&k| (k, -f)));
                            }
                        }
                        Freeze::XGivenZ => {
                            for x2 in 0..dx {
                                let f = profile[z][x];
                                terms.extend(by_cell[(z * dx + x2) * dy + y].iter().map(|&k| (k, -f)));
                            }
                        }
                    }
                    lp.add_eq(terms, 0.0);
                }
            }
        }
        lp
    }

    fn to_plan(&self, x: &[f64]) -> Result<TransportPlan> {
        let cells = self.rows.iter().enumerate().flat_map(|(r, &i)| {
            (0..self.n_cols).map(move |j| (i, j, x[r * self.n_cols + j]))
        });
        TransportPlan::from_cells(self.schema.clone(), self.schema.clone(), cells)
    }

    fn column_mass(&self, x: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.n_cols];
        for row in x.chunks(self.n_cols) {
            for (a, b) in q.iter_mut().zip(row) {
                *a += b;
            }
        }
        q
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Freeze {
    YGivenZ,
    XGivenZ,
}

/// Builds the program over the active rows of `p`.
pub fn build_qclp(p: &Distribution, cost: &CostMatrix, sigma: &CiConstraint) -> Result<QclpProgram> {
    if cost.schema() != p.schema() {
        return Err(Error::Shape("cost matrix is over another schema".into()));
    }
    let layout = CiLayout::new(p.schema(), sigma)?;
    let rows: Vec<usize> = p.support().collect();
    let n_cols = p.schema().size();
    if rows.len() * n_cols > LP_CAP {
        return Err(Error::SizeCap {
            size: rows.len() * n_cols,
            cap: LP_CAP,
        });
    }
    let cost_vec = rows.iter().flat_map(|&i| cost.row(i).iter().copied()).collect();
    Ok(QclpProgram {
        marginals: rows.iter().map(|&i| p.mass()[i]).collect(),
        rows,
        n_cols,
        cost: cost_vec,
        sigma: sigma.clone(),
        layout,
        schema: p.schema().clone(),
    })
}

#[derive(Clone, Debug)]
pub struct QclpResult {
    pub plan: TransportPlan,
    pub target: Distribution,
    /// Objective after each linearized solve.
    pub costs: Vec<f64>,
    /// Independence residual of each step's target.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl QclpResult {
    pub fn final_cost(&self) -> f64 {
        self.costs.last().copied().unwrap_or(0.0)
    }
}

/// Alternating linearization from a constraint-satisfying start `init`.
///
/// The starting plan is the cheapest transport onto `init`. Even steps
/// freeze the `Y | Z` profile, odd steps the `X | Z` profile. Stops once
/// the plan moves by at most `tol` in ∞-norm.
pub fn solve_qclp_alternating(
    prog: &QclpProgram,
    init: &Distribution,
    outer_max: usize,
    tol: f64,
) -> Result<QclpResult> {
    if init.schema() != &prog.schema {
        return Err(Error::Shape("initial target is over another schema".into()));
    }
    let start = prog.transport_lp(init.mass()).solve().map_err(internal)?;
    let mut x = start.x;
    let mut costs = Vec::new();
    let mut residuals = Vec::new();
    let mut converged = false;
    for step in 0..outer_max.max(1) {
        let freeze = if step % 2 == 0 { Freeze::YGivenZ } else { Freeze::XGivenZ };
        let q = prog.column_mass(&x);
        let sol = prog.linearized_lp(&q, freeze).solve().map_err(internal)?;
        let moved = sol
            .x
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        costs.push(sol.objective);
        residuals.push(prog.independence_residual(&prog.column_mass(&sol.x)));
        x = sol.x;
        if moved <= tol {
            converged = true;
            break;
        }
    }
    let plan = prog.to_plan(&x)?;
    let target = plan.target()?;
    Ok(QclpResult {
        plan,
        target,
        costs,
        residuals,
        converged,
    })
}

fn internal(e: Error) -> Error {
    match e {
        Error::Infeasible(m) => Error::Internal(format!("linearized program became infeasible: {m}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{build_cost_matrix, CostSpec};
    use crate::dist::Schema;
    use crate::fastotclean::nmf_init;
    use crate::ot::exact_ot_lp;

    fn none() -> Vec<&'static str> {
        vec![]
    }

    fn d2() -> (Distribution, CostMatrix, CiConstraint) {
        let s = Schema::binary(&["X", "Y", "Z"]);
        let data = [["1", "0", "0"], ["1", "0", "1"], ["1", "1", "0"], ["1", "1", "0"]];
        let p = Distribution::empirical(&data, s.clone()).unwrap();
        let c = build_cost_matrix(&s, &CostSpec::hamming()).unwrap();
        (p, c, CiConstraint::new(["Y"], ["Z"], none()).unwrap())
    }

    #[test]
    fn d2_program_shape() {
        let (p, c, sigma) = d2();
        let prog = build_qclp(&p, &c, &sigma).unwrap();
        assert_eq!((prog.n_rows(), prog.n_cols), (3, 8));
        assert_eq!(prog.validity_count(), 24);
        assert_eq!(prog.marginal_count(), 3);
        assert_eq!(prog.independence_count(), 4);
        let dump: serde_json::Value = serde_json::from_str(&prog.to_json().unwrap()).unwrap();
        assert_eq!(dump["grid"], serde_json::json!([3, 8]));
    }

    #[test]
    fn point_mass_program() {
        let s = Schema::binary(&["X", "Y"]);
        let p = Distribution::point_mass(s.clone(), 2).unwrap();
        let c = build_cost_matrix(&s, &CostSpec::hamming()).unwrap();
        let prog = build_qclp(&p, &c, &CiConstraint::new(["X"], ["Y"], none()).unwrap()).unwrap();
        assert_eq!((prog.n_rows(), prog.n_cols, prog.marginal_count()), (1, 4, 1));
    }

    #[test]
    fn consistent_input_stays_put() {
        let s = Schema::binary(&["X", "Y"]);
        let p = Distribution::new(s.clone(), vec![0.12, 0.28, 0.18, 0.42]).unwrap();
        let c = build_cost_matrix(&s, &CostSpec::hamming()).unwrap();
        let sigma = CiConstraint::new(["X"], ["Y"], none()).unwrap();
        let prog = build_qclp(&p, &c, &sigma).unwrap();
        let res = solve_qclp_alternating(&prog, &p, 50, 1e-12).unwrap();
        assert!(res.converged);
        assert_eq!(res.costs.len(), 1);
        assert!(res.final_cost().abs() < 1e-12);
        for i in 0..4 {
            assert!((res.plan.get(i, i) - p.mass()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn d2_reaches_a_cheaper_repair_than_a_quarter() {
        let (p, c, sigma) = d2();
        let prog = build_qclp(&p, &c, &sigma).unwrap();
        let q0 = nmf_init(&p, &sigma).unwrap();
        let res = solve_qclp_alternating(&prog, &q0, 100, 1e-12).unwrap();
        assert!(prog.independence_residual(res.target.mass()) <= 1e-6);
        assert!(res.final_cost() <= 0.25 + 1e-12);
        // The exact transport cost onto the returned target agrees.
        let (lp_cost, _) = exact_ot_lp(&p, &res.target, &c).unwrap();
        assert!((lp_cost - res.final_cost()).abs() < 1e-9);
    }

    #[test]
    fn pure_transport_lp_matches_the_oracle() {
        let s = Schema::binary(&["A", "B"]);
        let c = build_cost_matrix(&s, &CostSpec::hamming()).unwrap();
        let p = Distribution::new(s.clone(), vec![0.1, 0.4, 0.3, 0.2]).unwrap();
        let q = Distribution::new(s.clone(), vec![0.25, 0.05, 0.3, 0.4]).unwrap();
        let prog = build_qclp(&p, &c, &CiConstraint::new(["A"], ["B"], none()).unwrap()).unwrap();
        let sol = prog.transport_lp(q.mass()).solve().unwrap();
        let (oracle, _) = exact_ot_lp(&p, &q, &c).unwrap();
        assert!((sol.objective - oracle).abs() < 1e-9);
    }
}
