use serde::{Deserialize, Serialize};

use crate::cost::CostMatrix;
use crate::dist::{Distribution, Schema};
use crate::error::{Error, Result};

/// Cells below this mass are dropped when serializing.
pub const SERIALIZE_FLOOR: f64 = 1e-15;

/// Joint probability over source × destination joint indices, row-major.
///
/// `scale` is the total mass of the unnormalized solution the plan came
/// from; it is 1 for exact solves and slightly off 1 for relaxed ones.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    src: Schema,
    dst: Schema,
    mass: Vec<f64>,
    scale: f64,
}

#[derive(Serialize, Deserialize)]
struct PlanJson {
    schema_hash: String,
    entries: Vec<EntryJson>,
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    src_index: usize,
    dst_index: usize,
    mass: f64,
}

impl TransportPlan {
    /// Normalizes `mass` to total 1 and remembers the original total.
    pub fn from_raw(src: Schema, dst: Schema, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != src.size() * dst.size() {
            return Err(Error::Shape(format!(
                "plan has {} cells, expected {}x{}",
                mass.len(),
                src.size(),
                dst.size()
            )));
        }
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::Distribution("plan cells must be finite and nonnegative".into()));
        }
        let scale: f64 = mass.iter().sum();
        if scale <= 0.0 {
            return Err(Error::Degenerate("plan carries no mass".into()));
        }
        let mass = mass.into_iter().map(|m| m / scale).collect();
        Ok(Self {
            src,
            dst,
            mass,
            scale,
        })
    }

    /// Plan from `(src, dst, mass)` triples.
    pub fn from_cells(
        src: Schema,
        dst: Schema,
        cells: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let m = dst.size();
        let mut mass = vec![0.0; src.size() * m];
        for (i, j, v) in cells {
            if i >= src.size() || j >= m {
                return Err(Error::Shape(format!("cell ({i}, {j}) outside the plan")));
            }
            mass[i * m + j] += v;
        }
        Self::from_raw(src, dst, mass)
    }

    /// Mass of `p` kept in place.
    pub fn identity(p: &Distribution) -> Self {
        let n = p.schema().size();
        let mut mass = vec![0.0; n * n];
        for (i, &m) in p.mass().iter().enumerate() {
            mass[i * n + i] = m;
        }
        Self {
            src: p.schema().clone(),
            dst: p.schema().clone(),
            mass,
            scale: 1.0,
        }
    }

    /// Independent coupling `p ⊗ q`.
    pub fn product(p: &Distribution, q: &Distribution) -> Self {
        let mass = p
            .mass()
            .iter()
            .flat_map(|a| q.mass().iter().map(move |b| a * b))
            .collect();
        Self {
            src: p.schema().clone(),
            dst: q.schema().clone(),
            mass,
            scale: 1.0,
        }
    }

    pub fn src_schema(&self) -> &Schema {
        &self.src
    }

    pub fn dst_schema(&self) -> &Schema {
        &self.dst
    }

    pub fn rows(&self) -> usize {
        self.src.size()
    }

    pub fn cols(&self) -> usize {
        self.dst.size()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.cols() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.cols();
        &self.mass[i * m..(i + 1) * m]
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The plan before normalization.
    pub fn raw_mass(&self) -> Vec<f64> {
        self.mass.iter().map(|m| m * self.scale).collect()
    }

    pub fn src_marginal(&self) -> Vec<f64> {
        (0..self.rows()).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn dst_marginal(&self) -> Vec<f64> {
        let m = self.cols();
        let mut out = vec![0.0; m];
        for row in self.mass.chunks(m) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    pub fn source(&self) -> Result<Distribution> {
        Distribution::from_weights(self.src.clone(), self.src_marginal())
    }

    pub fn target(&self) -> Result<Distribution> {
        Distribution::from_weights(self.dst.clone(), self.dst_marginal())
    }

    /// Cells with mass above [`SERIALIZE_FLOOR`], in row-major order.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let m = self.cols();
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > SERIALIZE_FLOOR)
            .map(move |(k, v)| (k / m, k % m, *v))
    }

    fn schema_hash(src: &Schema, dst: &Schema) -> String {
        if src == dst {
            src.fingerprint()
        } else {
            format!("{}:{}", src.fingerprint(), dst.fingerprint())
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = PlanJson {
            schema_hash: Self::schema_hash(&self.src, &self.dst),
            entries: self
                .nonzero()
                .map(|(src_index, dst_index, mass)| EntryJson {
                    src_index,
                    dst_index,
                    mass,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Parses a serialized plan, checking it was written for these schemas.
    pub fn from_json(text: &str, src: Schema, dst: Schema) -> Result<Self> {
        let doc: PlanJson = serde_json::from_str(text)?;
        let expected = Self::schema_hash(&src, &dst);
        if doc.schema_hash != expected {
            return Err(Error::Validation(format!(
                "plan was written for schema {}, data has schema {expected}",
                doc.schema_hash
            )));
        }
        Self::from_cells(
            src,
            dst,
            doc.entries.into_iter().map(|e| (e.src_index, e.dst_index, e.mass)),
        )
    }
}

/// `Σ C(i,j) π(i,j)` over the normalized plan.
pub fn transport_cost(plan: &TransportPlan, cost: &CostMatrix) -> Result<f64> {
    if plan.rows() != cost.size() || plan.cols() != cost.size() {
        return Err(Error::Shape(format!(
            "plan is {}x{}, cost matrix is {}x{}",
            plan.rows(),
            plan.cols(),
            cost.size(),
            cost.size()
        )));
    }
    Ok(plan
        .mass
        .iter()
        .zip(cost.entries())
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, c)| m * c)
        .sum())
}
