//! Projection onto distributions satisfying `X ⫫ Y | Z` by rank-one KL
//! factorization of every Z-slice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{generalized_kl, CiConstraint, CiLayout, Distribution};
use crate::error::{Error, Result};

const FLOOR: f64 = 1e-300;

/// Rank-one factors `w hᵀ` of a nonnegative matrix; `h` sums to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair {
    pub w: Vec<f64>,
    pub h: Vec<f64>,
}

impl FactorPair {
    /// Row-major `w hᵀ`.
    pub fn outer(&self) -> Vec<f64> {
        self.w
            .iter()
            .flat_map(|a| self.h.iter().map(move |b| a * b))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfOptions {
    /// Stop once the KL objective decreases by less than this fraction.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for NmfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NmfOutput {
    pub factors: FactorPair,
    /// KL objective after each multiplicative sweep.
    pub trace: Vec<f64>,
}

/// Lee–Seung multiplicative KL updates restricted to rank one, started
/// from a seeded random point.
pub fn rank1_kl_nmf(m: &[f64], rows: usize, cols: usize, opts: &NmfOptions) -> Result<NmfOutput> {
    if m.len() != rows * cols || rows == 0 || cols == 0 {
        return Err(Error::Shape(format!("matrix has {} cells, expected {rows}x{cols}", m.len())));
    }
    if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Validation("matrix entries must be finite and nonnegative".into()));
    }
    let total: f64 = m.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("cannot factorize an all-zero matrix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut w: Vec<f64> = (0..rows).map(|_| rng.random_range(0.1..1.0)).collect();
    let mut h: Vec<f64> = (0..cols).map(|_| rng.random_range(0.1..1.0)).collect();

    let objective = |w: &[f64], h: &[f64]| {
        let approx: Vec<f64> = w.iter().flat_map(|a| h.iter().map(move |b| a * b)).collect();
        generalized_kl(m, &approx)
    };
    let mut trace = Vec::new();
    let mut last = objective(&w, &h);
    for _ in 0..opts.max_iter.max(1) {
        let hs: f64 = h.iter().sum::<f64>().max(FLOOR);
        for i in 0..rows {
            let num: f64 = (0..cols)
                .map(|j| h[j] * m[i * cols + j] / (w[i] * h[j]).max(FLOOR))
                .sum();
            w[i] *= num / hs;
        }
        let ws: f64 = w.iter().sum::<f64>().max(FLOOR);
        for j in 0..cols {
            let num: f64 = (0..rows)
                .map(|i| w[i] * m[i * cols + j] / (w[i] * h[j]).max(FLOOR))
                .sum();
            h[j] *= num / ws;
        }
        let obj = objective(&w, &h);
        trace.push(obj);
        let done = obj <= 0.0 || (last - obj) <= opts.tol * last.abs();
        last = obj;
        if done {
            break;
        }
    }
    let hs: f64 = h.iter().sum();
    h.iter_mut().for_each(|x| *x /= hs);
    let ws: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x *= total / ws);
    Ok(NmfOutput {
        factors: FactorPair { w, h },
        trace,
    })
}

/// Result of projecting a distribution, with per-slice NMF traces.
#[derive(Clone, Debug)]
pub struct Projection {
    pub q: Distribution,
    /// Indexed by Z value; empty for zero-mass slices.
    pub traces: Vec<Vec<f64>>,
}

/// Projects `dist` onto the set where `sigma` holds, with default options.
pub fn project_to_ci(dist: &Distribution, sigma: &CiConstraint) -> Result<Distribution> {
    Ok(project_to_ci_with(dist, sigma, &NmfOptions::default())?.q)
}

/// Replaces every Z-slice of the `(X, Y, Z)` marginal by its rank-one KL
/// factorization, keeping each slice's mass.
///
/// Attributes outside the constraint keep their conditional law given
/// `(X, Y, Z)`; where the original has no mass on an `(x, y, z)` cell the
/// marginal law of the remaining attributes is used.
pub fn project_to_ci_with(dist: &Distribution, sigma: &CiConstraint, opts: &NmfOptions) -> Result<Projection> {
    let layout = CiLayout::new(dist.schema(), sigma)?;
    let (dx, dy) = (layout.dx, layout.dy);
    let slices = layout.slices(dist.mass());
    let projected: Vec<(Vec<f64>, Vec<f64>)> = slices
        .par_iter()
        .enumerate()
        .map(|(z, s)| {
            if s.iter().sum::<f64>() <= 0.0 {
                return Ok((vec![0.0; dx * dy], Vec::new()));
            }
            let slice_opts = NmfOptions {
                seed: opts.seed.wrapping_add(z as u64),
                ..*opts
            };
            let out = rank1_kl_nmf(s, dx, dy, &slice_opts)?;
            Ok((out.factors.outer(), out.trace))
        })
        .collect::<Result<_>>()?;

    let mass = dist.mass();
    let w_marginal = remainder_marginal(mass, &layout);
    let q: Vec<f64> = (0..mass.len())
        .map(|i| {
            let (z, c) = (layout.z_of[i], layout.x_of[i] * dy + layout.y_of[i]);
            let qu = projected[z].0[c];
            if qu == 0.0 {
                return 0.0;
            }
            let pu = slices[z][c];
            if layout.w_schema.is_none() {
                qu
            } else if pu > 0.0 {
                qu * mass[i] / pu
            } else {
                qu * w_marginal[layout.w_of[i]]
            }
        })
        .collect();
    Ok(Projection {
        q: Distribution::from_weights(dist.schema().clone(), q)?,
        traces: projected.into_iter().map(|(_, t)| t).collect(),
    })
}

fn remainder_marginal(mass: &[f64], layout: &CiLayout) -> Vec<f64> {
    let mut out = vec![0.0; layout.dw()];
    for (i, m) in mass.iter().enumerate() {
        out[layout.w_of[i]] += m;
    }
    out
}
