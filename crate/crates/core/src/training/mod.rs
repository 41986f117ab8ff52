//! Stochastic training of the latent trajectory and parameters with Nesterov momentum.
//!
//! Each iteration samples `B` transition pairs `(Z_t, Z_{t+1})` uniformly with replacement,
//! evaluates the gradient of the pair-restricted objective at the look-ahead point
//! `θ + μ v`, and applies `v ← μ v − lr ∇`, `θ ← θ + v` to every block, including latent
//! slices that were not sampled (their velocity keeps decaying).

mod gradcheck;

pub use gradcheck::{grad_check, random_instance, GradCheckInstance};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{RelationSet, SeriesTensor};
use crate::error::{Error, Result};
use crate::model::{
    blocks, blocks_mut, gradients, init_model, loss, Gradients, LatentState, LossBreakdown, ModelVariant,
    Penalties, StnnParameters,
};
use crate::numerics::{RngState, Stream};

/// How the L1 penalty on relation weights enters the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L1Update {
    /// `γ·sign(Γ)` is added to the gradient.
    Subgradient,
    /// The momentum step uses the smooth gradient only, then `Γ` is soft-thresholded by `lr·γ`.
    Proximal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub variant: ModelVariant,
    pub latent_dim: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_pairs: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Rescale the gradient to this norm when it is larger.
    pub clip_norm: Option<f64>,
    pub l1_update: L1Update,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            variant: ModelVariant::Stnn,
            latent_dim: 10,
            lambda: 0.1,
            gamma: 0.0,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_pairs: 32,
            epochs: 500,
            seed: 0,
            clip_norm: None,
            l1_update: L1Update::Proximal,
        }
    }
}

impl TrainingConfig {
    pub fn penalties(&self) -> Penalties {
        Penalties {
            lambda: self.lambda,
            gamma: self.gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Argument(msg.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite non-negative number");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be a finite non-negative number");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_pairs == 0 {
            return bad("batch size must be at least 1");
        }
        if self.latent_dim == 0 {
            return bad("latent dimension must be at least 1");
        }
        if matches!(self.clip_norm, Some(c) if c.is_nan() || c <= 0.0) {
            return bad("clip norm must be positive");
        }
        Ok(())
    }
}

/// Velocity buffers, one per learnable block: latent slices first, then parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocities: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn zeros_like(latent: &LatentState, params: &StnnParameters) -> Self {
        let mut velocities: Vec<Vec<f64>> = latent
            .slices
            .iter()
            .map(|s| vec![0.0; s.as_slice().len()])
            .collect();
        velocities.extend(blocks(params).iter().map(|b| vec![0.0; b.len()]));
        Self { velocities }
    }
}

/// All learnable blocks in optimizer order.
pub fn state_blocks_mut<'a>(latent: &'a mut LatentState, params: &'a mut StnnParameters) -> Vec<&'a mut [f64]> {
    let mut out: Vec<&mut [f64]> = latent.slices.iter_mut().map(|s| s.as_mut_slice()).collect();
    out.extend(blocks_mut(params));
    out
}

/// Gradient blocks in optimizer order.
pub fn gradient_blocks(grad: &Gradients) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = grad.latent.slices.iter().map(|s| s.as_slice()).collect();
    out.extend(blocks(&grad.params));
    out
}

/// One momentum update `v ← μ v − lr·g`, `x ← x + v` per block. `grads` must have been
/// evaluated at the look-ahead point `x + μ v`.
pub fn nag_step(
    state: &mut [&mut [f64]],
    grads: &[&[f64]],
    opt: &mut OptimizerState,
    learning_rate: f64,
    momentum: f64,
) -> Result<()> {
    if state.len() != grads.len() || state.len() != opt.velocities.len() {
        return Err(Error::Validation(format!(
            "block count mismatch: {} blocks, {} gradients, {} velocities",
            state.len(),
            grads.len(),
            opt.velocities.len()
        )));
    }
    for ((block, grad), vel) in state.iter_mut().zip(grads).zip(opt.velocities.iter_mut()) {
        if block.len() != grad.len() || block.len() != vel.len() {
            return Err(Error::Validation("block shape mismatch in momentum step".into()));
        }
        for ((x, g), v) in block.iter_mut().zip(grad.iter()).zip(vel.iter_mut()) {
            *v = momentum * *v - learning_rate * g;
            *x += *v;
        }
    }
    Ok(())
}

/// `batch` pair start indices drawn uniformly with replacement from `0..steps-1`.
pub fn sample_pairs(steps: usize, batch: usize, rng: &mut RngState) -> Result<Vec<usize>> {
    if steps < 2 {
        return Err(Error::Argument("pair sampling needs at least two time steps".into()));
    }
    if batch == 0 {
        return Err(Error::Argument("batch size must be at least 1".into()));
    }
    Ok((0..batch).map(|_| rng.index(steps - 1)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    /// Mean gradient norm over the epoch's iterations.
    pub grad_norm: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingTrace {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn totals(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss.total).collect()
    }

    /// CSV `epoch,reconstruction,dynamics,l1,total,grad_norm,seconds`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "epoch,reconstruction,dynamics,l1,total,grad_norm,seconds").map_err(io)?;
        for e in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{},{},{:.6}",
                e.epoch, e.loss.reconstruction, e.loss.dynamics, e.loss.l1_gamma, e.loss.total, e.grad_norm, e.seconds
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub latent: LatentState,
    pub params: StnnParameters,
    pub trace: TrainingTrace,
}

/// Fits latent trajectory and parameters to `x` from a fresh seeded initialization.
pub fn train(x: &SeriesTensor, relations: &RelationSet, cfg: &TrainingConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if x.steps() < 2 {
        return Err(Error::Argument("training needs at least two time steps".into()));
    }
    if cfg.variant.uses_prior() && relations.is_empty() {
        log::warn!("{} trained without relations; dynamics reduce to the intra-series term", cfg.variant);
    }
    let mut init_rng = RngState::with_stream(cfg.seed, Stream::Init);
    let (latent, params) = init_model(
        x.series(),
        x.dims(),
        cfg.latent_dim,
        relations,
        cfg.variant,
        x.steps(),
        &mut init_rng,
    )?;
    train_from(x, relations, cfg, latent, params)
}

/// Continues training from a given state (fresh optimizer state).
pub fn train_from(
    x: &SeriesTensor,
    relations: &RelationSet,
    cfg: &TrainingConfig,
    mut latent: LatentState,
    mut params: StnnParameters,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let mut pair_rng = RngState::with_stream(cfg.seed, Stream::Pairs);
    let mut opt = OptimizerState::zeros_like(&latent, &params);
    let penalties = cfg.penalties();
    let proximal = cfg.l1_update == L1Update::Proximal && cfg.variant.uses_gammas() && cfg.gamma > 0.0;
    let step_penalties = if proximal {
        Penalties { gamma: 0.0, ..penalties }
    } else {
        penalties
    };
    let iterations = (x.steps() - 1).div_ceil(cfg.batch_pairs);
    let mut trace = TrainingTrace::default();
    let start = Instant::now();

    for epoch in 0..cfg.epochs {
        let mut norm_sum = 0.0;
        for _ in 0..iterations {
            let pairs = sample_pairs(x.steps(), cfg.batch_pairs, &mut pair_rng)?;
            let (look_latent, look_params) = lookahead(&latent, &params, &opt, cfg.momentum);
            let mut grad = gradients(x, &look_latent, &look_params, relations, cfg.variant, step_penalties, Some(&pairs))?;
            let norm = grad.norm();
            if !norm.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            norm_sum += norm;
            if let Some(limit) = cfg.clip_norm {
                if norm > limit {
                    scale_gradients(&mut grad, limit / norm);
                }
            }
            {
                let mut state = state_blocks_mut(&mut latent, &mut params);
                nag_step(&mut state, &gradient_blocks(&grad), &mut opt, cfg.learning_rate, cfg.momentum)?;
            }
            if proximal {
                soft_threshold_gammas(&mut params, cfg.learning_rate * cfg.gamma);
            }
            if !latent.is_finite() || !params.is_finite() {
                return Err(Error::Divergence { epoch });
            }
        }
        let full = loss(x, &latent, &params, relations, cfg.variant, penalties, None)?;
        if !full.total.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        trace.epochs.push(EpochRecord {
            epoch,
            loss: full,
            grad_norm: norm_sum / iterations as f64,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainedModel { latent, params, trace })
}

fn lookahead(
    latent: &LatentState,
    params: &StnnParameters,
    opt: &OptimizerState,
    momentum: f64,
) -> (LatentState, StnnParameters) {
    let mut latent = latent.clone();
    let mut params = params.clone();
    if momentum != 0.0 {
        let mut state = state_blocks_mut(&mut latent, &mut params);
        for (block, vel) in state.iter_mut().zip(&opt.velocities) {
            for (x, v) in block.iter_mut().zip(vel) {
                *x += momentum * v;
            }
        }
    }
    (latent, params)
}

fn scale_gradients(grad: &mut Gradients, factor: f64) {
    let mut state = state_blocks_mut(&mut grad.latent, &mut grad.params);
    for block in state.iter_mut() {
        block.iter_mut().for_each(|g| *g *= factor);
    }
}

fn soft_threshold_gammas(params: &mut StnnParameters, threshold: f64) {
    if let Some(gammas) = &mut params.gammas {
        for g in gammas.iter_mut() {
            for v in g.as_mut_slice() {
                *v = v.signum() * (v.abs() - threshold).max(0.0);
            }
        }
    }
}
