//! Alternating computation of a probabilistic data cleaner: a relaxed
//! Sinkhorn solve against the current target, then re-projection of the
//! plan's target marginal onto the constraint set.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ci_project::{project_to_ci_with, NmfOptions};
use crate::cost::CostMatrix;
use crate::dist::{cmi, generalized_kl, CiConstraint, Distribution};
use crate::error::{Error, Result};
use crate::ot::{transport_cost, EntropicSolver, ScalingState, SolverParams, TransportPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Init {
    /// Projection of the input onto the constraint set.
    Nmf,
    /// Projection of a seeded random distribution.
    Random { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanerConfig {
    pub solver: SolverParams,
    /// Weight of the constraint violation in the reported objective.
    pub mu: f64,
    pub outer_tol: f64,
    pub outer_max: usize,
    pub init: Init,
    pub warm_start: bool,
    pub nmf: NmfOptions,
}

impl Default for CleanerConfig {
    fn default() -> Self {
        Self {
            solver: SolverParams::default(),
            mu: 1.0,
            outer_tol: 1e-7,
            outer_max: 200,
            init: Init::Nmf,
            warm_start: true,
            nmf: NmfOptions::default(),
        }
    }
}

impl CleanerConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if !(self.outer_tol > 0.0) {
            return Err(Error::Validation("outer_tol must be positive".into()));
        }
        if self.outer_max == 0 {
            return Err(Error::Validation("outer_max must be at least 1".into()));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Validation("mu must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub cost: f64,
    pub delta_sigma: f64,
    pub sinkhorn_iters: usize,
}

#[derive(Clone, Debug)]
pub struct CleanerResult {
    pub plan: TransportPlan,
    pub target: Distribution,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
}

impl CleanerResult {
    pub fn outer_iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn sinkhorn_iterations(&self) -> usize {
        self.trace.iter().map(|r| r.sinkhorn_iters).sum()
    }

    pub fn final_cost(&self) -> f64 {
        self.trace.last().map_or(0.0, |r| r.cost)
    }

    pub fn write_trace(&self, mut out: impl Write) -> Result<()> {
        for r in &self.trace {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Weights of the regularized objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveWeights {
    pub rho: f64,
    pub lambda: f64,
    pub mu: f64,
}

/// `⟨C, π⟩ - H(π)/ρ + λ (KL(π₁ | P) + KL(π₂ | Q)) + μ · I_σ(Q)`, evaluated
/// on the plan's raw (unnormalized) mass.
///
/// Entropy and KL use their unnormalized forms, `Σ π ln π - Σ π + 1` and
/// `Σ a ln(a/b) - Σ a + Σ b`; on normalized arguments they are the usual
/// quantities.
pub fn objective_value(
    plan: &TransportPlan,
    q: &Distribution,
    p: &Distribution,
    cost: &CostMatrix,
    sigma: &CiConstraint,
    weights: &ObjectiveWeights,
) -> Result<f64> {
    let raw = plan.raw_mass();
    let n = plan.cols();
    let total: f64 = raw.iter().sum();
    let transport: f64 = raw
        .iter()
        .zip(cost.entries())
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, c)| m * c)
        .sum();
    let neg_entropy: f64 = raw.iter().filter(|m| **m > 0.0).map(|m| m * m.ln()).sum::<f64>() - total + 1.0;
    let rows: Vec<f64> = raw.chunks(n).map(|r| r.iter().sum()).collect();
    let mut cols = vec![0.0; n];
    for r in raw.chunks(n) {
        for (c, v) in cols.iter_mut().zip(r) {
            *c += v;
        }
    }
    let marginals = generalized_kl(&rows, p.mass()) + generalized_kl(&cols, q.mass());
    let violation = if weights.mu > 0.0 { weights.mu * cmi(q, sigma)? } else { 0.0 };
    Ok(transport + neg_entropy / weights.rho + weights.lambda * marginals + violation)
}

/// Starting target: the projection of `p` onto the constraint set.
pub fn nmf_init(p: &Distribution, sigma: &CiConstraint) -> Result<Distribution> {
    crate::ci_project::project_to_ci(p, sigma)
}

fn random_init(p: &Distribution, sigma: &CiConstraint, seed: u64, nmf: &NmfOptions) -> Result<Distribution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..p.schema().size()).map(|_| rng.random_range(0.05..1.0)).collect();
    let r = Distribution::from_weights(p.schema().clone(), weights)?;
    Ok(project_to_ci_with(&r, sigma, nmf)?.q)
}

/// Alternates relaxed Sinkhorn solves and constraint projections until the
/// target moves by at most `outer_tol` in ∞-norm.
///
/// With an unsaturated constraint the projection acts on the constrained
/// attributes and keeps the conditional law of the others.
pub fn fast_otclean(
    p: &Distribution,
    cost: &CostMatrix,
    sigma: &CiConstraint,
    cfg: &CleanerConfig,
) -> Result<CleanerResult> {
    cfg.validate()?;
    sigma.validate(p.schema())?;
    if cost.schema() != p.schema() {
        return Err(Error::Shape("cost matrix is over another schema".into()));
    }
    let weights = ObjectiveWeights {
        rho: cfg.solver.rho,
        lambda: cfg.solver.lambda,
        mu: cfg.mu,
    };
    let mut q = match cfg.init {
        Init::Nmf => project_to_ci_with(p, sigma, &cfg.nmf)?.q,
        Init::Random { seed } => random_init(p, sigma, seed, &cfg.nmf)?,
    };
    let solver = EntropicSolver::new(p, cost, cfg.solver)?;
    let mut state: Option<ScalingState> = None;
    let mut trace = Vec::with_capacity(cfg.outer_max);
    let mut converged = false;
    let mut plan = None;
    for iter in 1..=cfg.outer_max {
        let out = solver.solve_relaxed(&q, state.as_ref())?;
        let next = project_to_ci_with(&out.plan.target()?, sigma, &cfg.nmf)?.q;
        let objective = objective_value(&out.plan, &next, p, cost, sigma, &weights)?;
        trace.push(TraceRecord {
            iter,
            objective,
            cost: transport_cost(&out.plan, cost)?,
            delta_sigma: cmi(&next, sigma)?,
            sinkhorn_iters: out.iterations,
        });
        let moved = next.max_abs_diff(&q)?;
        q = next;
        if cfg.warm_start {
            state = Some(out.state);
        }
        let inner_ok = out.converged;
        plan = Some(out.plan);
        if moved <= cfg.outer_tol {
            converged = inner_ok;
            break;
        }
    }
    Ok(CleanerResult {
        plan: plan.expect("outer_max >= 1"),
        target: q,
        trace,
        converged,
    })
}
