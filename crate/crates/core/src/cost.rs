//! Repair-cost matrices over a joint domain.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, Schema};
use crate::error::{Error, Result};

/// Cost assigned to any move that changes a frozen attribute.
pub const LARGE: f64 = 1e9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CostKind {
    /// Number of attributes that differ.
    Hamming,
    /// L2 distance of numeric encodings, each attribute divided by its
    /// standard deviation under a reference distribution.
    Euclidean,
    WeightedHamming { weights: BTreeMap<String, f64> },
    /// Headerless CSV with one row and one column per joint index.
    ExternalMatrix { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    #[serde(flatten)]
    pub kind: CostKind,
    #[serde(default)]
    pub frozen: Vec<String>,
}

impl CostSpec {
    pub fn hamming() -> Self {
        Self {
            kind: CostKind::Hamming,
            frozen: vec![],
        }
    }

    pub fn euclidean() -> Self {
        Self {
            kind: CostKind::Euclidean,
            frozen: vec![],
        }
    }

    pub fn weighted_hamming<S: Into<String>>(weights: impl IntoIterator<Item = (S, f64)>) -> Self {
        Self {
            kind: CostKind::WeightedHamming {
                weights: weights.into_iter().map(|(k, w)| (k.into(), w)).collect(),
            },
            frozen: vec![],
        }
    }

    pub fn external(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: CostKind::ExternalMatrix { path: path.into() },
            frozen: vec![],
        }
    }

    pub fn with_frozen<S: Into<String>>(mut self, attrs: impl IntoIterator<Item = S>) -> Self {
        self.frozen = attrs.into_iter().map(Into::into).collect();
        self
    }

    /// True when the cost of a move depends only on per-attribute changes.
    pub fn is_separable(&self) -> bool {
        !matches!(self.kind, CostKind::ExternalMatrix { .. })
    }

    fn validate(&self, schema: &Schema) -> Result<()> {
        for f in &self.frozen {
            schema.position(f)?;
        }
        if let CostKind::WeightedHamming { weights } = &self.kind {
            for (name, w) in weights {
                schema.position(name)?;
                if !w.is_finite() || *w < 0.0 {
                    return Err(Error::Validation(format!("weight of `{name}` must be >= 0")));
                }
            }
        }
        Ok(())
    }
}

/// Dense square cost matrix, row-major, indexed by joint index.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    schema: Schema,
    entries: Vec<f64>,
}

impl CostMatrix {
    /// Wraps a dense matrix after checking shape, sign and zero diagonal.
    pub fn from_entries(schema: Schema, entries: Vec<f64>) -> Result<Self> {
        let n = schema.size();
        if entries.len() != n * n {
            return Err(Error::Validation(format!(
                "cost matrix has {} entries, expected {n}x{n}",
                entries.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let c = entries[i * n + j];
                if c.is_nan() || c < 0.0 || c.is_infinite() {
                    return Err(Error::Validation(format!("cost[{i}][{j}] = {c} is not a finite nonnegative number")));
                }
            }
            if entries[i * n + i] != 0.0 {
                return Err(Error::Validation(format!("cost[{i}][{i}] must be 0")));
            }
        }
        Ok(Self { schema, entries })
    }

    /// Reads a headerless CSV of `size` rows by `size` columns.
    pub fn from_csv(schema: Schema, path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        let n = schema.size();
        let mut entries = Vec::with_capacity(n * n);
        let mut rows = 0;
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != n {
                return Err(Error::Line {
                    line: line as u64 + 1,
                    message: format!("expected {n} cost columns, found {}", record.len()),
                });
            }
            for field in &record {
                let v: f64 = field.trim().parse().map_err(|_| Error::Line {
                    line: line as u64 + 1,
                    message: format!("`{field}` is not a number"),
                })?;
                entries.push(v);
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::Validation(format!("expected {n} cost rows, found {rows}")));
        }
        Self::from_entries(schema, entries)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn size(&self) -> usize {
        self.schema.size()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.size();
        &self.entries[i * n..(i + 1) * n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Builds the cost matrix; euclidean costs standardize under the uniform
/// distribution.
pub fn build_cost_matrix(schema: &Schema, spec: &CostSpec) -> Result<CostMatrix> {
    build_cost_matrix_with_reference(schema, spec, None)
}

/// Like [`build_cost_matrix`], standardizing euclidean attributes by their
/// spread under `reference` when given.
pub fn build_cost_matrix_with_reference(
    schema: &Schema,
    spec: &CostSpec,
    reference: Option<&Distribution>,
) -> Result<CostMatrix> {
    spec.validate(schema)?;
    let n = schema.size();
    let arity = schema.arity();
    let codes: Vec<Vec<usize>> = (0..n).map(|i| schema.decode_codes(i)).collect();
    let frozen: Vec<usize> = spec
        .frozen
        .iter()
        .map(|f| schema.position(f))
        .collect::<Result<_>>()?;

    let mut entries = match &spec.kind {
        CostKind::ExternalMatrix { path } => CostMatrix::from_csv(schema.clone(), path)?.entries,
        CostKind::Hamming => pairwise(n, |i, j| {
            (0..arity).filter(|&a| codes[i][a] != codes[j][a]).count() as f64
        }),
        CostKind::WeightedHamming { weights } => {
            let w: Vec<f64> = schema
                .names()
                .iter()
                .map(|name| weights.get(*name).copied().unwrap_or(1.0))
                .collect();
            pairwise(n, |i, j| {
                (0..arity)
                    .filter(|&a| codes[i][a] != codes[j][a])
                    .map(|a| w[a])
                    .sum()
            })
        }
        CostKind::Euclidean => {
            let scale = spreads(schema, reference)?;
            let attrs = schema.attributes();
            pairwise(n, |i, j| {
                (0..arity)
                    .map(|a| {
                        let d = (attrs[a].numeric()[codes[i][a]] - attrs[a].numeric()[codes[j][a]])
                            / scale[a];
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt()
            })
        }
    };

    if !frozen.is_empty() {
        for i in 0..n {
            for j in 0..n {
                if frozen.iter().any(|&a| codes[i][a] != codes[j][a]) {
                    entries[i * n + j] = LARGE;
                }
            }
        }
    }
    CostMatrix::from_entries(schema.clone(), entries)
}

fn pairwise(n: usize, f: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[i * n + j] = f(i, j);
            }
        }
    }
    out
}

/// Standard deviation of each attribute's numeric encoding; a zero spread
/// falls back to 1.
fn spreads(schema: &Schema, reference: Option<&Distribution>) -> Result<Vec<f64>> {
    if let Some(r) = reference {
        if r.schema() != schema {
            return Err(Error::Shape("reference distribution is over another schema".into()));
        }
    }
    schema
        .attributes()
        .iter()
        .map(|attr| {
            let probs = match reference {
                Some(r) => r.marginalize(&[attr.name()])?.into_mass(),
                None => vec![1.0 / attr.len() as f64; attr.len()],
            };
            let mean: f64 = probs.iter().zip(attr.numeric()).map(|(p, v)| p * v).sum();
            let var: f64 = probs
                .iter()
                .zip(attr.numeric())
                .map(|(p, v)| p * (v - mean) * (v - mean))
                .sum();
            let sd = var.sqrt();
            Ok(if sd > 0.0 { sd } else { 1.0 })
        })
        .collect()
}
