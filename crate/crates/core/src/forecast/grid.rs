use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate, ModelKind, ModelSpec, ScoreReport};
use super::folds::FoldPlan;
use crate::dataset::{expand_powers, RelationSet, SeriesTensor};
use crate::error::{Error, Result};
use crate::training::TrainingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub latent_dims: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub powers: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            latent_dims: vec![5, 10, 20, 50, 80],
            lambdas: vec![0.001, 0.01, 0.1, 1.0, 10.0],
            gammas: vec![0.001, 0.01, 0.1, 1.0],
            powers: vec![1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub latent_dim: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub powers: usize,
    pub mean_rmse: Option<f64>,
    pub per_horizon: Vec<Option<f64>>,
    pub failed_cells: usize,
    /// Selection score: `mean_rmse`, or infinity when any cell failed.
    pub score: f64,
}

impl GridPoint {
    fn selection_order(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(self.latent_dim.cmp(&other.latent_dim))
            .then(self.lambda.total_cmp(&other.lambda))
            .then(self.gamma.total_cmp(&other.gamma))
            .then(self.powers.cmp(&other.powers))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    /// Points in grid order (`N`, then `λ`, `γ`, `K`).
    pub points: Vec<GridPoint>,
    pub best: usize,
    /// Full evaluation of the selected point.
    pub best_report: ScoreReport,
}

impl GridReport {
    pub fn best_point(&self) -> &GridPoint {
        &self.points[self.best]
    }

    /// Response surface CSV `latent_dim,lambda,gamma,powers,mean_rmse,failed_cells`.
    pub fn save_surface_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "latent_dim,lambda,gamma,powers,mean_rmse,failed_cells").map_err(io)?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                p.latent_dim,
                p.lambda,
                p.gamma,
                p.powers,
                p.mean_rmse.unwrap_or(f64::NAN),
                p.failed_cells
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Exhaustive search over `N × λ × γ × K` for the learned model `base`. Each point is
/// evaluated with relations expanded to `K` powers of `base_relations`. The best point has
/// the lowest mean RMSE; ties go to smaller `N`, then `λ`, `γ` and `K`.
pub fn grid_search(
    x: &SeriesTensor,
    base_relations: &RelationSet,
    plan: &FoldPlan,
    base: &TrainingConfig,
    grid: &GridSpec,
    repeats: usize,
) -> Result<GridReport> {
    if grid.latent_dims.is_empty() || grid.lambdas.is_empty() || grid.gammas.is_empty() || grid.powers.is_empty() {
        return Err(Error::Argument("every grid axis needs at least one value".into()));
    }
    let name = base.variant.to_string();
    let expanded = grid
        .powers
        .iter()
        .map(|&k| expand_powers(base_relations, k))
        .collect::<Result<Vec<_>>>()?;
    let mut points = Vec::new();
    let mut reports = Vec::new();
    for &latent_dim in &grid.latent_dims {
        for &lambda in &grid.lambdas {
            for &gamma in &grid.gammas {
                for (&powers, relations) in grid.powers.iter().zip(&expanded) {
                    let cfg = TrainingConfig {
                        latent_dim,
                        lambda,
                        gamma,
                        ..base.clone()
                    };
                    cfg.validate()?;
                    let spec = ModelSpec {
                        name: name.clone(),
                        kind: ModelKind::Learned(cfg),
                    };
                    let report = evaluate(x, relations, plan, &[spec], repeats)?;
                    let summary = report.summary(&name);
                    log::info!(
                        "grid N={latent_dim} lambda={lambda} gamma={gamma} K={powers}: {:?}",
                        summary.mean_rmse
                    );
                    points.push(GridPoint {
                        latent_dim,
                        lambda,
                        gamma,
                        powers,
                        score: report.ranking_score(&name),
                        mean_rmse: summary.mean_rmse,
                        per_horizon: summary.per_horizon,
                        failed_cells: summary.failed_cells,
                    });
                    reports.push(report);
                }
            }
        }
    }
    let best = (0..points.len())
        .min_by(|&a, &b| points[a].selection_order(&points[b]))
        .expect("grid is non-empty");
    let best_report = reports.swap_remove(best);
    Ok(GridReport {
        points,
        best,
        best_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(score: f64, latent_dim: usize, lambda: f64) -> GridPoint {
        GridPoint {
            latent_dim,
            lambda,
            gamma: 0.0,
            powers: 1,
            mean_rmse: Some(score),
            per_horizon: vec![],
            failed_cells: 0,
            score,
        }
    }

    #[test]
    fn ties_prefer_smaller_settings() {
        assert_eq!(point(0.1, 2, 1.0).selection_order(&point(0.1, 3, 0.1)), Ordering::Less);
        assert_eq!(point(0.1, 2, 0.1).selection_order(&point(0.1, 2, 1.0)), Ordering::Less);
        assert_eq!(point(0.2, 2, 0.1).selection_order(&point(0.1, 9, 9.0)), Ordering::Greater);
        assert_eq!(point(f64::INFINITY, 1, 0.1).selection_order(&point(5.0, 9, 9.0)), Ordering::Greater);
    }

    #[test]
    fn empty_axis_is_rejected() {
        let x = SeriesTensor::new(30, 1, 1, vec![0.0; 30]).unwrap();
        let plan = crate::forecast::plan_folds(30, 10, 3, 1).unwrap();
        let grid = GridSpec { latent_dims: vec![], lambdas: vec![0.1], gammas: vec![0.0], powers: vec![1] };
        assert!(grid_search(&x, &RelationSet::empty(1), &plan, &TrainingConfig::default(), &grid, 1).is_err());
    }
}
