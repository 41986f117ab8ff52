use serde::{Deserialize, Serialize};

use super::relations::{row_normalize, Provenance, RelationSet};
use super::SeriesTensor;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Latent relational tanh dynamics with a linear decoder.
    TeacherStnn,
    /// `x_{t+1} = (1-α) x_t + α W x_t + noise` with row-normalized `W`.
    GridDiffusion,
}

/// Undirected graph layout of the generated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// 4-neighbour lattice; series `r * cols + c` sits at row `r`, column `c`.
    Grid { rows: usize, cols: usize },
    Edges(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub series: usize,
    pub dims: usize,
    pub latent_dim: usize,
    pub steps: usize,
    pub topology: Topology,
    pub noise_std: f64,
    pub seed: u64,
    /// Diffusion mixing rate.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Optional initial state (row-major `n×m` for diffusion).
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    /// Spectral scale of the teacher's intra-series transition.
    #[serde(default = "default_teacher_gain")]
    pub teacher_gain: f64,
    /// Scale of the teacher's neighbour transition, relative to `1/√N`.
    #[serde(default = "default_teacher_coupling")]
    pub teacher_coupling: f64,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_teacher_gain() -> f64 {
    4.0
}

fn default_teacher_coupling() -> f64 {
    4.0
}

impl SyntheticSpec {
    pub fn grid_diffusion(rows: usize, cols: usize, steps: usize, noise_std: f64, seed: u64) -> Self {
        Self {
            kind: SyntheticKind::GridDiffusion,
            series: rows * cols,
            dims: 1,
            latent_dim: 1,
            steps,
            topology: Topology::Grid { rows, cols },
            noise_std,
            seed,
            alpha: default_alpha(),
            initial_state: None,
            teacher_gain: default_teacher_gain(),
            teacher_coupling: default_teacher_coupling(),
        }
    }

    pub fn teacher_stnn(
        rows: usize,
        cols: usize,
        latent_dim: usize,
        steps: usize,
        noise_std: f64,
        seed: u64,
    ) -> Self {
        Self {
            kind: SyntheticKind::TeacherStnn,
            latent_dim,
            ..Self::grid_diffusion(rows, cols, steps, noise_std, seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.series == 0 || self.dims == 0 || self.latent_dim == 0 || self.steps == 0 {
            return Err(Error::Argument("synthetic sizes must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Argument("noise std must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Argument("diffusion alpha must lie in [0, 1]".into()));
        }
        match &self.topology {
            Topology::Grid { rows, cols } if rows * cols != self.series => Err(Error::Argument(
                format!("grid {rows}x{cols} does not hold {} series", self.series),
            )),
            Topology::Edges(edges) if edges.iter().any(|&(i, j)| i >= self.series || j >= self.series) => {
                Err(Error::Argument("edge endpoint out of range".into()))
            }
            _ => Ok(()),
        }
    }

    /// Binary symmetric adjacency of the topology, without self-loops.
    pub fn adjacency(&self) -> Matrix {
        let n = self.series;
        let mut w = Matrix::zeros(n, n);
        match &self.topology {
            Topology::Grid { rows, cols } => {
                for r in 0..*rows {
                    for c in 0..*cols {
                        let i = r * cols + c;
                        if c + 1 < *cols {
                            w.set(i, i + 1, 1.0);
                            w.set(i + 1, i, 1.0);
                        }
                        if r + 1 < *rows {
                            w.set(i, i + cols, 1.0);
                            w.set(i + cols, i, 1.0);
                        }
                    }
                }
            }
            Topology::Edges(edges) => {
                for &(i, j) in edges {
                    if i != j {
                        w.set(i, j, 1.0);
                        w.set(j, i, 1.0);
                    }
                }
            }
        }
        w
    }
}

/// Generating parameters of a teacher model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherParams {
    pub latent_dim: usize,
    /// Row-normalized adjacency used in the dynamics.
    pub relation: Matrix,
    pub theta0: Matrix,
    pub theta1: Matrix,
    pub decoder_weight: Matrix,
    pub decoder_bias: Vec<f64>,
    pub initial_latent: Matrix,
    /// Full noiseless latent trajectory (not written to disk).
    #[serde(skip)]
    pub latent: Vec<Matrix>,
}

/// Ground truth kept next to a synthetic dataset for later scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: SyntheticKind,
    pub seed: u64,
    /// Directed edges `(i, j)`: series `j` influences series `i`.
    pub adjacency: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher: Option<TeacherParams>,
}

impl GroundTruth {
    pub fn adjacency_matrix(&self, n: usize) -> Matrix {
        let mut w = Matrix::zeros(n, n);
        for &(i, j) in &self.adjacency {
            w.set(i, j, 1.0);
        }
        w
    }
}

/// Generates a dataset, its raw binary relation prior, and the ground-truth record.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(SeriesTensor, RelationSet, GroundTruth)> {
    spec.validate()?;
    let adjacency = spec.adjacency();
    let mut rng = RngState::with_stream(spec.seed, Stream::Synthetic);
    let (mut slices, teacher) = match spec.kind {
        SyntheticKind::GridDiffusion => (diffusion(spec, &adjacency, &mut rng)?, None),
        SyntheticKind::TeacherStnn => {
            let (slices, teacher) = teacher_stnn(spec, &adjacency, &mut rng)?;
            (slices, Some(teacher))
        }
    };
    if spec.noise_std > 0.0 && spec.kind == SyntheticKind::TeacherStnn {
        for s in &mut slices {
            for v in s.as_mut_slice() {
                *v += rng.normal(0.0, spec.noise_std);
            }
        }
    }
    let mut x = SeriesTensor::from_slices(&slices)?;
    x.time_step_label = "steps".into();
    let relations = RelationSet::single("adjacency", adjacency.clone(), Provenance::Raw)?;
    let n = spec.series;
    let edges = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| adjacency.get(i, j) != 0.0)
        .collect();
    let truth = GroundTruth {
        kind: spec.kind,
        seed: spec.seed,
        adjacency: edges,
        teacher,
    };
    Ok((x, relations, truth))
}

fn diffusion(spec: &SyntheticSpec, adjacency: &Matrix, rng: &mut RngState) -> Result<Vec<Matrix>> {
    let (n, m) = (spec.series, spec.dims);
    let w = row_normalize(adjacency);
    let mut state = match &spec.initial_state {
        Some(init) => Matrix::new(n, m, init.clone())?,
        None => Matrix::from_fn(n, m, |_, _| rng.uniform()),
    };
    let mut slices = Vec::with_capacity(spec.steps);
    slices.push(state.clone());
    for _ in 1..spec.steps {
        let mixed = w.matmul(&state)?;
        let mut next = state.scale(1.0 - spec.alpha);
        next.add_scaled(&mixed, spec.alpha)?;
        if spec.noise_std > 0.0 {
            for v in next.as_mut_slice() {
                *v += rng.normal(0.0, spec.noise_std);
            }
        }
        state = next;
        slices.push(state.clone());
    }
    Ok(slices)
}

/// Random orthogonal matrix from Gram-Schmidt on a Gaussian draw.
fn random_orthogonal(size: usize, rng: &mut RngState) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(size);
    while cols.len() < size {
        let mut v: Vec<f64> = (0..size).map(|_| rng.normal(0.0, 1.0)).collect();
        for u in &cols {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    Matrix::from_fn(size, size, |i, j| cols[j][i])
}

fn teacher_stnn(
    spec: &SyntheticSpec,
    adjacency: &Matrix,
    rng: &mut RngState,
) -> Result<(Vec<Matrix>, TeacherParams)> {
    let (n, m, latent) = (spec.series, spec.dims, spec.latent_dim);
    let relation = row_normalize(adjacency);
    let theta0 = random_orthogonal(latent, rng).scale(spec.teacher_gain);
    let coupling = spec.teacher_coupling / (latent as f64).sqrt();
    let theta1 = Matrix::from_fn(latent, latent, |_, _| rng.normal(0.0, coupling));
    let decoder_weight = Matrix::from_fn(latent, m, |_, _| rng.normal(0.0, 1.0));
    let decoder_bias = vec![0.0; m];
    let initial_latent = Matrix::from_fn(n, latent, |_, _| rng.normal(0.0, 0.5));

    let mut latent_path = Vec::with_capacity(spec.steps);
    let mut z = initial_latent.clone();
    for t in 0..spec.steps {
        if t > 0 {
            let own = z.matmul(&theta0)?;
            let neigh = relation.matmul(&z)?.matmul(&theta1)?;
            z = own.add(&neigh)?.map_tanh();
        }
        latent_path.push(z.clone());
    }
    let slices = latent_path
        .iter()
        .map(|z| z.matmul(&decoder_weight))
        .collect::<Result<Vec<_>>>()?;
    let teacher = TeacherParams {
        latent_dim: latent,
        relation,
        theta0,
        theta1,
        decoder_weight,
        decoder_bias,
        initial_latent,
        latent: latent_path,
    };
    Ok((slices, teacher))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_diffusion_is_constant() {
        let mut spec = SyntheticSpec::grid_diffusion(2, 3, 5, 0.0, 1);
        spec.alpha = 0.0;
        let (x, _, _) = generate_synthetic(&spec).unwrap();
        for t in 1..5 {
            assert_eq!(x.step(t), x.step(0));
        }
    }

    #[test]
    fn full_exchange_alternates() {
        let mut spec = SyntheticSpec::grid_diffusion(1, 2, 4, 0.0, 1);
        spec.alpha = 1.0;
        spec.initial_state = Some(vec![0.0, 1.0]);
        let (x, _, _) = generate_synthetic(&spec).unwrap();
        assert_eq!(x.step(0), &[0.0, 1.0]);
        assert_eq!(x.step(1), &[1.0, 0.0]);
        assert_eq!(x.step(2), &[0.0, 1.0]);
        assert_eq!(x.step(3), &[1.0, 0.0]);
    }

    #[test]
    fn teacher_is_reproducible() {
        let spec = SyntheticSpec::teacher_stnn(2, 3, 3, 30, 0.01, 9);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        let teacher = a.2.teacher.unwrap();
        assert_eq!(teacher.latent.len(), 30);
        assert_eq!(teacher.theta0.shape(), (3, 3));
    }

    #[test]
    fn grid_adjacency_has_four_neighbours_inside() {
        let spec = SyntheticSpec::grid_diffusion(3, 3, 2, 0.0, 0);
        let w = spec.adjacency();
        let degree: Vec<f64> = (0..9).map(|i| w.row(i).iter().sum()).collect();
        assert_eq!(degree, vec![2.0, 3.0, 2.0, 3.0, 4.0, 3.0, 2.0, 3.0, 2.0]);
        let (_, rel, truth) = generate_synthetic(&spec).unwrap();
        assert_eq!(truth.adjacency.len(), 24);
        assert_eq!(truth.adjacency_matrix(9), w);
        assert_eq!(rel.matrix(0), &w);
    }

    #[test]
    fn validation_errors() {
        let mut spec = SyntheticSpec::grid_diffusion(2, 2, 5, 0.0, 1);
        spec.series = 5;
        assert!(generate_synthetic(&spec).is_err());
        let mut spec = SyntheticSpec::grid_diffusion(2, 2, 5, 0.0, 1);
        spec.noise_std = -1.0;
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn diffusion_stays_in_convex_hull() {
        let spec = SyntheticSpec::grid_diffusion(4, 5, 40, 0.0, 3);
        let (x, _, _) = generate_synthetic(&spec).unwrap();
        for t in 1..x.steps() {
            let prev = x.step(t - 1);
            let cur = x.step(t);
            let lo = prev.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = prev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(cur.iter().all(|&v| v >= lo - 1e-15 && v <= hi + 1e-15));
        }
    }
}
