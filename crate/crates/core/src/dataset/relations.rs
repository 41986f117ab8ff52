use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// How a relation matrix was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Raw,
    PowerK(usize),
    NormalizedRaw,
    NormalizedPowerK(usize),
    /// Placeholder for prior-free models: the matrix is all zeros and only fixes the relation count.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub label: String,
    pub matrix: Matrix,
    pub provenance: Provenance,
}

/// Ordered set of non-negative `n×n` prior matrices `W^(r)`.
///
/// Entry `(i, j)` is the influence of series `j` on series `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSet {
    n: usize,
    relations: Vec<Relation>,
}

impl RelationSet {
    pub fn new(n: usize, relations: Vec<Relation>) -> Result<Self> {
        for rel in &relations {
            if rel.matrix.shape() != (n, n) {
                return Err(Error::shape("relation", (n, n), rel.matrix.shape()));
            }
            if rel.matrix.as_slice().iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "relation {:?} has negative or non-finite weights",
                    rel.label
                )));
            }
        }
        Ok(Self { n, relations })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            relations: Vec::new(),
        }
    }

    /// `count` all-zero relations, for models that learn their relation matrices without a prior.
    pub fn prior_free(n: usize, count: usize) -> Self {
        let relations = (0..count)
            .map(|r| Relation {
                label: format!("free{r}"),
                matrix: Matrix::zeros(n, n),
                provenance: Provenance::Free,
            })
            .collect();
        Self { n, relations }
    }

    pub fn single(label: &str, matrix: Matrix, provenance: Provenance) -> Result<Self> {
        let n = matrix.rows();
        Self::new(
            n,
            vec![Relation {
                label: label.to_string(),
                matrix,
                provenance,
            }],
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn matrix(&self, r: usize) -> &Matrix {
        &self.relations[r].matrix
    }

    pub fn labels(&self) -> Vec<String> {
        self.relations.iter().map(|r| r.label.clone()).collect()
    }

    /// Row-normalized copy: every row sums to 1, or stays zero for series without neighbours.
    pub fn row_normalized(&self) -> Self {
        let relations = self
            .relations
            .iter()
            .map(|rel| Relation {
                label: rel.label.clone(),
                matrix: row_normalize(&rel.matrix),
                provenance: match rel.provenance {
                    Provenance::Raw => Provenance::NormalizedRaw,
                    Provenance::PowerK(k) => Provenance::NormalizedPowerK(k),
                    other => other,
                },
            })
            .collect();
        Self {
            n: self.n,
            relations,
        }
    }

    /// Relabels series: output series `i` is input series `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            n: self.n,
            relations: self
                .relations
                .iter()
                .map(|rel| Relation {
                    matrix: rel.matrix.permute_symmetric(perm),
                    ..rel.clone()
                })
                .collect(),
        }
    }

    /// Writes `label,i,j,weight` rows for every non-zero entry.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for rel in &self.relations {
            for i in 0..self.n {
                for j in 0..self.n {
                    let w = rel.matrix.get(i, j);
                    if w != 0.0 {
                        writeln!(out, "{},{i},{j},{w}", rel.label).map_err(|e| Error::io(path, e))?;
                    }
                }
            }
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn row_normalize(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        }
    }
    out
}

/// Reads `label,i,j,weight` rows into one raw matrix per distinct label, in order of first
/// appearance. Duplicate edges are summed.
pub fn load_relations(path: &Path, n: usize) -> Result<RelationSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.into(),
            line: 0,
            msg: e.to_string(),
        })?;
    let mut labels: Vec<String> = Vec::new();
    let mut matrices: Vec<Matrix> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.into(),
            line: k + 1,
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        let parse_err = |msg: String| Error::Parse {
            path: path.into(),
            line,
            msg,
        };
        if record.len() != 4 {
            return Err(parse_err(format!("expected label,i,j,weight, found {} fields", record.len())));
        }
        let i: usize = record[1]
            .parse()
            .map_err(|_| parse_err(format!("bad row index {:?}", &record[1])))?;
        let j: usize = record[2]
            .parse()
            .map_err(|_| parse_err(format!("bad column index {:?}", &record[2])))?;
        let w: f64 = record[3]
            .parse()
            .map_err(|_| parse_err(format!("bad weight {:?}", &record[3])))?;
        if i >= n || j >= n {
            return Err(Error::Validation(format!(
                "line {line}: edge ({i}, {j}) outside 0..{n}"
            )));
        }
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Validation(format!("line {line}: negative or non-finite weight {w}")));
        }
        let label = &record[0];
        let r = match labels.iter().position(|l| l == label) {
            Some(r) => r,
            None => {
                labels.push(label.to_string());
                matrices.push(Matrix::zeros(n, n));
                labels.len() - 1
            }
        };
        let prev = matrices[r].get(i, j);
        if prev != 0.0 {
            log::warn!("{}: line {line}: duplicate edge {label},{i},{j}; weights summed", path.display());
        }
        matrices[r].set(i, j, prev + w);
    }
    let relations = labels
        .into_iter()
        .zip(matrices)
        .map(|(label, matrix)| Relation {
            label,
            matrix,
            provenance: Provenance::Raw,
        })
        .collect();
    RelationSet::new(n, relations)
}

/// Relations `W^(1)..W^(K)` with `W^(k) = W^(k-1) × W`. Self-loops created by the powers
/// (k ≥ 2) are removed, then every matrix is row-normalized.
pub fn build_powers(base: &Matrix, k: usize) -> Result<RelationSet> {
    if k < 1 {
        return Err(Error::Argument("power count K must be at least 1".into()));
    }
    let n = base.rows();
    if base.cols() != n {
        return Err(Error::shape("build_powers", base.shape(), (n, n)));
    }
    if base.as_slice().iter().any(|&v| v < 0.0) {
        return Err(Error::Validation("base relation has negative weights".into()));
    }
    let mut relations = Vec::with_capacity(k);
    let mut power = base.clone();
    for order in 1..=k {
        if order > 1 {
            power = power.matmul(base)?;
        }
        let mut m = power.clone();
        if order > 1 {
            for i in 0..n {
                m.set(i, i, 0.0);
            }
        }
        relations.push(Relation {
            label: format!("w^{order}"),
            matrix: row_normalize(&m),
            provenance: Provenance::NormalizedPowerK(order),
        });
    }
    RelationSet::new(n, relations)
}

/// Replaces every relation of `set` by its powers `1..=k` (see [`build_powers`]), labelled
/// `label^k`. Learned-only placeholders are kept as they are.
pub fn expand_powers(set: &RelationSet, k: usize) -> Result<RelationSet> {
    if k < 1 {
        return Err(Error::Argument("power count K must be at least 1".into()));
    }
    if set.relations().iter().all(|r| r.provenance == Provenance::Free) {
        return Ok(set.clone());
    }
    let mut out = Vec::with_capacity(set.len() * k);
    for rel in set.relations() {
        for (order, mut power) in build_powers(&rel.matrix, k)?.relations.into_iter().enumerate() {
            power.label = format!("{}^{}", rel.label, order + 1);
            out.push(power);
        }
    }
    RelationSet::new(set.n(), out)
}
