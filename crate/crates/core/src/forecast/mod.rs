//! Closed-loop forecasting, scoring, baselines and rolling-origin evaluation.

mod baselines;
mod evaluate;
mod folds;
mod grid;
mod metrics;

pub use baselines::{ar_fit, ar_fit_predict, mean_baseline, ArConfig, ArModel};
pub use evaluate::{evaluate, fit_fold, CellScore, FoldFit, ModelKind, ModelSpec, ModelSummary, ScoreReport};
pub use folds::{plan_folds, Fold, FoldPlan};
pub use grid::{grid_search, GridPoint, GridReport, GridSpec};
pub use metrics::{auc, rmse, HorizonScores};

use crate::dataset::{RelationSet, SeriesTensor};
use crate::error::{Error, Result};
use crate::model::{decode, dynamics_step, ModelVariant, StnnParameters};
use crate::numerics::Matrix;

/// Latent slices `Z_{T+1}..Z_{T+τ}` obtained by applying the dynamics `τ` times to `start`.
pub fn rollout(
    start: &Matrix,
    params: &StnnParameters,
    relations: &RelationSet,
    variant: ModelVariant,
    horizon: usize,
) -> Result<Vec<Matrix>> {
    if horizon < 1 {
        return Err(Error::Argument("forecast horizon must be at least 1".into()));
    }
    let mut slices = Vec::with_capacity(horizon);
    let mut z = start.clone();
    for _ in 0..horizon {
        z = dynamics_step(&z, params, relations, variant)?;
        slices.push(z.clone());
    }
    Ok(slices)
}

/// Predictions for every horizon `1..=τ`, decoded from the rollout of `start` (normally the
/// last latent slice of the training window).
pub fn forecast(
    start: &Matrix,
    params: &StnnParameters,
    relations: &RelationSet,
    variant: ModelVariant,
    horizon: usize,
) -> Result<SeriesTensor> {
    let decoded = rollout(start, params, relations, variant, horizon)?
        .iter()
        .map(|z| decode(z, params))
        .collect::<Result<Vec<_>>>()?;
    SeriesTensor::from_slices(&decoded)
}
