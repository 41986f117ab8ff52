use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{ar_fit_predict, mean_baseline, ArConfig};
use super::folds::{Fold, FoldPlan};
use super::forecast;
use super::metrics::{rmse, HorizonScores};
use crate::dataset::{normalize, NormalizationRecord, RelationSet, SeriesTensor};
use crate::error::{Error, Result};
use crate::numerics::salted_seed;
use crate::training::{train, TrainedModel, TrainingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Mean,
    Ar(ArConfig),
    Learned(TrainingConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ModelKind,
}

/// One model fitted on one fold, everything in the fold's normalized units.
#[derive(Debug, Clone)]
pub struct FoldFit {
    pub predictions: SeriesTensor,
    pub truth: SeriesTensor,
    pub norm: NormalizationRecord,
    pub trained: Option<TrainedModel>,
}

/// Normalizes on the fold's training window, fits `model` on that window only and forecasts
/// the test block. Learned models use `seed` as their training seed.
pub fn fit_fold(x: &SeriesTensor, relations: &RelationSet, fold: Fold, model: &ModelKind, seed: u64) -> Result<FoldFit> {
    let train_len = fold.train_end - fold.train_start;
    let horizon = fold.test_end - fold.train_end;
    let window = x.window(fold.train_start..fold.test_end)?;
    let (scaled, norm) = normalize(&window, 0..train_len)?;
    let train_part = scaled.window(0..train_len)?;
    let truth = scaled.window(train_len..train_len + horizon)?;
    let (predictions, trained) = match model {
        ModelKind::Mean => (mean_baseline(&train_part, horizon)?, None),
        ModelKind::Ar(cfg) => (ar_fit_predict(&train_part, *cfg, horizon)?, None),
        ModelKind::Learned(cfg) => {
            let cfg = TrainingConfig { seed, ..cfg.clone() };
            let fitted = train(&train_part, relations, &cfg)?;
            let pred = forecast(fitted.latent.last(), &fitted.params, relations, cfg.variant, horizon)?;
            (pred, Some(fitted))
        }
    };
    Ok(FoldFit {
        predictions,
        truth,
        norm,
        trained,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub model: String,
    pub repeat: usize,
    pub fold: usize,
    pub scores: Option<HorizonScores>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    /// Mean overall RMSE over the successful cells.
    pub mean_rmse: Option<f64>,
    pub per_horizon: Vec<Option<f64>>,
    /// Population standard deviation, across repeats, of each repeat's mean RMSE.
    pub std_across_seeds: f64,
    pub failed_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub models: Vec<String>,
    pub folds: usize,
    pub horizon: usize,
    pub repeats: usize,
    pub cells: Vec<CellScore>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

impl ScoreReport {
    fn cells_of<'a>(&'a self, model: &'a str) -> impl Iterator<Item = &'a CellScore> + 'a {
        self.cells.iter().filter(move |c| c.model == model)
    }

    /// RMSE of one (model, fold, horizon) cell averaged over repeats; `None` if any repeat
    /// failed. `horizon` is 1-based.
    pub fn cell_rmse(&self, model: &str, fold: usize, horizon: usize) -> Option<f64> {
        let mut values = Vec::with_capacity(self.repeats);
        for c in self.cells_of(model).filter(|c| c.fold == fold) {
            values.push(c.scores.as_ref()?.per_horizon[horizon - 1]);
        }
        mean(values.into_iter())
    }

    pub fn summary(&self, model: &str) -> ModelSummary {
        let ok: Vec<&CellScore> = self.cells_of(model).filter(|c| c.scores.is_some()).collect();
        let failed_cells = self.cells_of(model).count() - ok.len();
        let overall = |c: &&CellScore| c.scores.as_ref().map_or(f64::NAN, |s| s.overall);
        let per_horizon = (0..self.horizon)
            .map(|h| mean(ok.iter().map(|c| c.scores.as_ref().map_or(f64::NAN, |s| s.per_horizon[h]))))
            .collect();
        let repeat_means: Vec<f64> = (0..self.repeats)
            .filter_map(|r| mean(ok.iter().filter(|c| c.repeat == r).map(overall)))
            .collect();
        let std_across_seeds = match mean(repeat_means.iter().copied()) {
            Some(mu) if repeat_means.len() > 1 => {
                (repeat_means.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / repeat_means.len() as f64).sqrt()
            }
            _ => 0.0,
        };
        ModelSummary {
            mean_rmse: mean(ok.iter().map(overall)),
            per_horizon,
            std_across_seeds,
            failed_cells,
        }
    }

    /// Mean RMSE for model selection; any failed cell makes the model unselectable.
    pub fn ranking_score(&self, model: &str) -> f64 {
        let s = self.summary(model);
        match s.mean_rmse {
            Some(v) if s.failed_cells == 0 => v,
            _ => f64::INFINITY,
        }
    }

    /// CSV `model,fold,horizon,rmse`; failed cells are written as `NaN`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "model,fold,horizon,rmse").map_err(io)?;
        for model in &self.models {
            for fold in 0..self.folds {
                for h in 1..=self.horizon {
                    let v = self.cell_rmse(model, fold, h).unwrap_or(f64::NAN);
                    writeln!(out, "{model},{fold},{h},{v}").map_err(io)?;
                }
            }
        }
        out.flush().map_err(io)
    }

    pub fn summary_map(&self) -> BTreeMap<String, ModelSummary> {
        self.models.iter().map(|m| (m.clone(), self.summary(m))).collect()
    }

    /// JSON `{model: {mean_rmse, per_horizon, std_across_seeds, failed_cells}}`.
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.summary_map())?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Rolling-origin evaluation of every model on every fold, `repeats` times for learned
/// models. Repeat `k` of a learned model on fold `f` trains with seed
/// `salted_seed(cfg.seed + k, f)`. A failing (model, fold) cell is recorded and skipped.
pub fn evaluate(
    x: &SeriesTensor,
    relations: &RelationSet,
    plan: &FoldPlan,
    models: &[ModelSpec],
    repeats: usize,
) -> Result<ScoreReport> {
    if models.is_empty() || repeats == 0 {
        return Err(Error::Argument("evaluation needs at least one model and one repeat".into()));
    }
    let mut names = HashSet::new();
    if let Some(dup) = models.iter().find(|m| !names.insert(m.name.as_str())) {
        return Err(Error::Argument(format!("duplicate model name {:?}", dup.name)));
    }
    if plan.folds.iter().any(|f| f.test_end > x.steps()) {
        return Err(Error::Argument(format!(
            "fold plan for length {} does not fit series of length {}",
            plan.length,
            x.steps()
        )));
    }
    let jobs: Vec<(usize, usize, usize)> = (0..models.len())
        .flat_map(|m| (0..repeats).flat_map(move |r| (0..plan.folds.len()).map(move |f| (m, r, f))))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(m, r, f)| {
            let spec = &models[m];
            let seed = match &spec.kind {
                ModelKind::Learned(cfg) => salted_seed(cfg.seed.wrapping_add(r as u64), f as u64),
                _ => 0,
            };
            let outcome = fit_fold(x, relations, plan.folds[f], &spec.kind, seed)
                .and_then(|fit| rmse(&fit.predictions, &fit.truth));
            let (scores, error) = match outcome {
                Ok(s) => (Some(s), None),
                Err(e) => {
                    log::warn!("{} fold {f} repeat {r} failed: {e}", spec.name);
                    (None, Some(e.to_string()))
                }
            };
            CellScore {
                model: spec.name.clone(),
                repeat: r,
                fold: f,
                scores,
                error,
            }
        })
        .collect();
    Ok(ScoreReport {
        models: models.iter().map(|m| m.name.clone()).collect(),
        folds: plan.folds.len(),
        horizon: plan.horizon,
        repeats,
        cells,
    })
}
