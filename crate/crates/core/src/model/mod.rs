//! The model family: learned latent trajectory, relational tanh dynamics, linear decoder,
//! the joint objective and its analytic gradients.

mod checkpoint;
mod correlations;
mod dynamics;
mod objective;

pub use checkpoint::Checkpoint;
pub use correlations::{extract_correlations, gate_dominance, Correlations};
pub use dynamics::{decode, dynamic_gate, dynamics_step, mixing_matrices};
pub use objective::{gradients, loss, Gradients, LossBreakdown, Penalties};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::RelationSet;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};

/// Which relation matrices drive the latent dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    /// Fixed priors `W^(r)`.
    #[serde(rename = "stnn")]
    Stnn,
    /// Priors refined by learned weights, `W^(r) ⊙ Γ^(r)`.
    #[serde(rename = "stnn-r")]
    StnnR,
    /// Learned `Γ^(r)` without a prior.
    #[serde(rename = "stnn-d")]
    StnnD,
    /// Rows of `W^(r)` scaled by a logistic gate of the receiving series' latent state.
    #[serde(rename = "stnn-gate")]
    StnnDynamicGate,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::Stnn,
        ModelVariant::StnnR,
        ModelVariant::StnnD,
        ModelVariant::StnnDynamicGate,
    ];

    pub fn uses_gammas(self) -> bool {
        matches!(self, ModelVariant::StnnR | ModelVariant::StnnD)
    }

    pub fn uses_gate(self) -> bool {
        self == ModelVariant::StnnDynamicGate
    }

    /// Whether the relation matrices are read (everything except the prior-free variant).
    pub fn uses_prior(self) -> bool {
        self != ModelVariant::StnnD
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::Stnn => "stnn",
            ModelVariant::StnnR => "stnn-r",
            ModelVariant::StnnD => "stnn-d",
            ModelVariant::StnnDynamicGate => "stnn-gate",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Argument(format!("unknown variant {s:?}")))
    }
}

/// Latent trajectory `Z`, one `n×N` slice per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub slices: Vec<Matrix>,
}

impl LatentState {
    pub fn zeros(steps: usize, series: usize, latent_dim: usize) -> Self {
        Self {
            slices: vec![Matrix::zeros(series, latent_dim); steps],
        }
    }

    pub fn steps(&self) -> usize {
        self.slices.len()
    }

    pub fn series(&self) -> usize {
        self.slices.first().map_or(0, Matrix::rows)
    }

    pub fn latent_dim(&self) -> usize {
        self.slices.first().map_or(0, Matrix::cols)
    }

    pub fn last(&self) -> &Matrix {
        self.slices.last().expect("latent state has at least one slice")
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().all(Matrix::is_finite)
    }
}

/// Logistic gate `σ(w_r · Z_t^i + b_r)` per relation. Row `r` of `weights` is `w_r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicGateParams {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl DynamicGateParams {
    pub fn zeros(relations: usize, latent_dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(relations, latent_dim),
            biases: vec![0.0; relations],
        }
    }
}

/// Learnable parameters besides the latent trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StnnParameters {
    pub theta0: Matrix,
    pub thetas: Vec<Matrix>,
    pub decoder_weight: Matrix,
    pub decoder_bias: Vec<f64>,
    #[serde(default)]
    pub gammas: Option<Vec<Matrix>>,
    #[serde(default)]
    pub gate: Option<DynamicGateParams>,
}

impl StnnParameters {
    pub fn latent_dim(&self) -> usize {
        self.theta0.rows()
    }

    pub fn dims(&self) -> usize {
        self.decoder_weight.cols()
    }

    pub fn relation_count(&self) -> usize {
        self.thetas.len()
    }

    /// Same layout with every entry zeroed.
    pub fn zeros_like(&self) -> Self {
        let zero = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            theta0: zero(&self.theta0),
            thetas: self.thetas.iter().map(zero).collect(),
            decoder_weight: zero(&self.decoder_weight),
            decoder_bias: vec![0.0; self.decoder_bias.len()],
            gammas: self.gammas.as_ref().map(|g| g.iter().map(zero).collect()),
            gate: self.gate.as_ref().map(|g| DynamicGateParams {
                weights: zero(&g.weights),
                biases: vec![0.0; g.biases.len()],
            }),
        }
    }

    pub fn is_finite(&self) -> bool {
        blocks(self).iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Checks shapes against the relation set and the blocks the variant needs.
    pub fn validate(&self, relations: &RelationSet, variant: ModelVariant) -> Result<()> {
        let latent = self.latent_dim();
        if self.theta0.shape() != (latent, latent) {
            return Err(Error::shape("theta0", self.theta0.shape(), (latent, latent)));
        }
        if self.thetas.len() != relations.len() {
            return Err(Error::Validation(format!(
                "{} relation transitions for {} relations",
                self.thetas.len(),
                relations.len()
            )));
        }
        if let Some(t) = self.thetas.iter().find(|t| t.shape() != (latent, latent)) {
            return Err(Error::shape("theta_r", t.shape(), (latent, latent)));
        }
        if self.decoder_weight.rows() != latent || self.decoder_bias.len() != self.dims() {
            return Err(Error::shape(
                "decoder",
                self.decoder_weight.shape(),
                (latent, self.decoder_bias.len()),
            ));
        }
        let n = relations.n();
        if variant.uses_gammas() {
            let gammas = self
                .gammas
                .as_ref()
                .ok_or_else(|| Error::State(format!("{variant} needs relation weights")))?;
            if gammas.len() != relations.len() || gammas.iter().any(|g| g.shape() != (n, n)) {
                return Err(Error::Validation("relation weight shapes do not match relations".into()));
            }
        }
        if variant.uses_gate() {
            let gate = self
                .gate
                .as_ref()
                .ok_or_else(|| Error::State("gated variant needs gate parameters".into()))?;
            if gate.weights.shape() != (relations.len(), latent) || gate.biases.len() != relations.len() {
                return Err(Error::Validation("gate parameter shapes do not match relations".into()));
            }
        }
        Ok(())
    }
}

/// Flat views of every parameter block in a fixed order.
pub fn blocks(params: &StnnParameters) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = vec![params.theta0.as_slice()];
    out.extend(params.thetas.iter().map(Matrix::as_slice));
    out.push(params.decoder_weight.as_slice());
    out.push(&params.decoder_bias);
    if let Some(g) = &params.gammas {
        out.extend(g.iter().map(Matrix::as_slice));
    }
    if let Some(g) = &params.gate {
        out.push(g.weights.as_slice());
        out.push(&g.biases);
    }
    out
}

/// Mutable counterpart of [`blocks`], same order.
pub fn blocks_mut(params: &mut StnnParameters) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = vec![params.theta0.as_mut_slice()];
    out.extend(params.thetas.iter_mut().map(Matrix::as_mut_slice));
    out.push(params.decoder_weight.as_mut_slice());
    out.push(&mut params.decoder_bias);
    if let Some(g) = &mut params.gammas {
        out.extend(g.iter_mut().map(Matrix::as_mut_slice));
    }
    if let Some(g) = &mut params.gate {
        out.push(g.weights.as_mut_slice());
        out.push(&mut g.biases);
    }
    out
}

/// Random initial latent trajectory and parameters.
///
/// `Z ~ N(0, 0.1²)`, `Θ ~ N(0, 0.01²)` with the identity added to `Θ0`, decoder weights
/// `~ N(0, 0.1²)` with zero bias. Relation weights start at one for [`ModelVariant::StnnR`]
/// and at `|N(0, 0.01²)|` for [`ModelVariant::StnnD`]; gates start at zero (output 0.5).
pub fn init_model(
    series: usize,
    dims: usize,
    latent_dim: usize,
    relations: &RelationSet,
    variant: ModelVariant,
    steps: usize,
    rng: &mut RngState,
) -> Result<(LatentState, StnnParameters)> {
    if latent_dim < 1 {
        return Err(Error::Argument("latent dimension must be at least 1".into()));
    }
    if steps < 2 {
        return Err(Error::Argument("need at least two time steps".into()));
    }
    if series < 1 || dims < 1 {
        return Err(Error::Argument("series count and dimension must be positive".into()));
    }
    if relations.n() != series {
        return Err(Error::shape("relations", (relations.n(), relations.n()), (series, series)));
    }
    let mut normal = |rows: usize, cols: usize, std: f64| Matrix::from_fn(rows, cols, |_, _| rng.normal(0.0, std));

    let latent = LatentState {
        slices: (0..steps).map(|_| normal(series, latent_dim, 0.1)).collect(),
    };
    let mut theta0 = normal(latent_dim, latent_dim, 0.01);
    for k in 0..latent_dim {
        theta0.set(k, k, theta0.get(k, k) + 1.0);
    }
    let thetas = (0..relations.len())
        .map(|_| normal(latent_dim, latent_dim, 0.01))
        .collect();
    let decoder_weight = normal(latent_dim, dims, 0.1);
    let gammas = match variant {
        ModelVariant::StnnR => Some(vec![Matrix::filled(series, series, 1.0); relations.len()]),
        ModelVariant::StnnD => Some(
            (0..relations.len())
                .map(|_| normal(series, series, 0.01).map(f64::abs))
                .collect(),
        ),
        _ => None,
    };
    let gate = variant
        .uses_gate()
        .then(|| DynamicGateParams::zeros(relations.len(), latent_dim));
    let params = StnnParameters {
        theta0,
        thetas,
        decoder_weight,
        decoder_bias: vec![0.0; dims],
        gammas,
        gate,
    };
    Ok((latent, params))
}
