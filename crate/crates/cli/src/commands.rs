use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use stnn::dataset::{
    expand_powers, generate_synthetic, infer_series_count, load_relations, load_series, normalize, GroundTruth,
    RelationSet, SeriesTensor,
};
use stnn::forecast::{
    auc, evaluate, forecast, grid_search, plan_folds, ArConfig, FoldPlan, ModelKind, ModelSpec, ScoreReport,
};
use stnn::model::{extract_correlations, gate_dominance, Checkpoint, LatentState, ModelVariant};
use stnn::training::{grad_check, train, TrainingTrace};

use crate::config::RunConfig;
use crate::error::CliError;

type CliResult<T = ()> = Result<T, CliError>;

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| stnn::Error::Io {
        path: dir.into(),
        source: e,
    })?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| stnn::Error::Io {
        path: path.into(),
        source: e,
    })?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let json = serde_json::to_string_pretty(value).map_err(stnn::Error::from)?;
    write_text(path, &(json + "\n"))
}

fn load_data(cfg: &RunConfig) -> CliResult<SeriesTensor> {
    let path = cfg.require(&cfg.series, "series")?;
    let n = infer_series_count(path, cfg.dims)?;
    Ok(load_series(path, n, cfg.dims)?)
}

/// Relations as loaded from `--relations`, or learned-only placeholders when every model in
/// `variants` can do without a prior.
fn base_relations(cfg: &RunConfig, n: usize, variants: &[ModelVariant]) -> CliResult<RelationSet> {
    match &cfg.relations {
        Some(path) => Ok(load_relations(path, n)?),
        None => match variants.iter().find(|v| v.uses_prior()) {
            Some(v) => Err(CliError::Config(format!("{v} needs a relations file (--relations)"))),
            None => Ok(RelationSet::prior_free(n, cfg.free_relations)),
        },
    }
}

fn latent_csv(latent: &LatentState) -> String {
    let mut out = String::new();
    for slice in &latent.slices {
        let row: Vec<String> = slice.as_slice().iter().map(f64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn generate(cfg: &RunConfig) -> CliResult {
    let dir = cfg.out_dir()?;
    let (x, relations, truth) = generate_synthetic(&cfg.synthetic_spec())?;
    create_dir(dir)?;
    x.save_csv(&dir.join("series.csv"))?;
    relations.save_csv(&dir.join("relations.csv"))?;
    write_json(&dir.join("truth.json"), &truth)?;
    cfg.write_manifest(dir)?;
    println!(
        "generated {} steps x {} series x {} dims into {}",
        x.steps(),
        x.series(),
        x.dims(),
        dir.display()
    );
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig) -> CliResult {
    let dir = cfg.out_dir()?;
    let x = load_data(cfg)?;
    let variant = cfg.training.variant;
    let relations = expand_powers(&base_relations(cfg, x.series(), &[variant])?, cfg.powers)?;
    let (data, norm) = if cfg.normalize {
        let (scaled, record) = normalize(&x, 0..x.steps())?;
        (scaled, Some(record))
    } else {
        (x, None)
    };
    let trained = train(&data, &relations, &cfg.training)?;
    let mut trace = trained.trace.clone();
    if !cfg.wall_clock {
        trace.epochs.iter_mut().for_each(|e| e.seconds = 0.0);
    }
    let last = trained.trace.epochs.last().map(|e| e.loss.total);
    let ckpt = Checkpoint::new(
        variant,
        cfg.training.penalties(),
        cfg.training.seed,
        relations,
        trained.params,
        trained.latent,
        norm,
    )?;
    create_dir(dir)?;
    ckpt.save(&dir.join("checkpoint.json"))?;
    write_text(&dir.join("latent.csv"), &latent_csv(&ckpt.latent))?;
    save_trace(&trace, &dir.join("trace.csv"))?;
    cfg.write_manifest(dir)?;
    match last {
        Some(total) => println!("trained {variant} for {} epochs, final loss {total}", trace.len()),
        None => println!("{variant} initialized (0 epochs)"),
    }
    Ok(())
}

fn save_trace(trace: &TrainingTrace, path: &Path) -> CliResult {
    Ok(trace.save_csv(path)?)
}

pub fn forecast_cmd(cfg: &RunConfig) -> CliResult {
    let dir = cfg.out_dir()?;
    let ckpt = Checkpoint::load(cfg.require(&cfg.checkpoint, "checkpoint")?)?;
    let pred = forecast(ckpt.latent.last(), &ckpt.params, &ckpt.relations, ckpt.variant, cfg.horizon)?;
    let pred = match &ckpt.norm {
        Some(record) => record.denormalize(&pred)?,
        None => pred,
    };
    create_dir(dir)?;
    pred.save_csv(&dir.join("forecast.csv"))?;
    cfg.write_manifest(dir)?;
    println!("forecast {} steps into {}", cfg.horizon, dir.join("forecast.csv").display());
    Ok(())
}

fn fold_plan(cfg: &RunConfig, length: usize) -> CliResult<FoldPlan> {
    let train_window = match cfg.train_window {
        Some(w) => w,
        None => length.checked_sub(cfg.horizon * cfg.folds).filter(|&w| w > 0).ok_or_else(|| {
            CliError::Config(format!(
                "series of length {length} is too short for {} folds of horizon {}; set --train-window",
                cfg.folds, cfg.horizon
            ))
        })?,
    };
    Ok(plan_folds(length, train_window, cfg.horizon, cfg.folds)?)
}

fn model_specs(cfg: &RunConfig) -> CliResult<Vec<ModelSpec>> {
    cfg.models
        .iter()
        .map(|name| {
            let kind = match name.as_str() {
                "mean" => ModelKind::Mean,
                "ar" => ModelKind::Ar(ArConfig {
                    lags: cfg.ar_lags,
                    intercept: true,
                }),
                "model" => ModelKind::Learned(cfg.training.clone()),
                // `ar<R>` fixes the lag, so several lags can be compared in one run.
                lagged if lagged.len() > 2 && lagged.starts_with("ar") && lagged[2..].parse::<usize>().is_ok() => {
                    ModelKind::Ar(ArConfig {
                        lags: lagged[2..].parse().expect("checked above"),
                        intercept: true,
                    })
                }
                other => {
                    let variant: ModelVariant = other
                        .parse()
                        .map_err(|_| CliError::Config(format!("unknown model {other:?}")))?;
                    ModelKind::Learned(stnn::training::TrainingConfig {
                        variant,
                        ..cfg.training.clone()
                    })
                }
            };
            let name = match &kind {
                ModelKind::Learned(t) => t.variant.to_string(),
                _ => name.clone(),
            };
            Ok(ModelSpec { name, kind })
        })
        .collect()
}

fn write_report(report: &ScoreReport, dir: &Path) -> CliResult {
    report.save_csv(&dir.join("scores.csv"))?;
    report.save_json(&dir.join("summary.json"))?;
    Ok(())
}

fn print_summary(report: &ScoreReport) {
    for model in &report.models {
        let s = report.summary(model);
        match s.mean_rmse {
            Some(v) => println!("{model}: mean RMSE {v:.6} ({} failed cells)", s.failed_cells),
            None => println!("{model}: all cells failed"),
        }
    }
}

pub fn evaluate_cmd(cfg: &RunConfig) -> CliResult {
    let dir = cfg.out_dir()?;
    let x = load_data(cfg)?;
    let specs = model_specs(cfg)?;
    let variants: Vec<ModelVariant> = specs
        .iter()
        .filter_map(|s| match &s.kind {
            ModelKind::Learned(t) => Some(t.variant),
            _ => None,
        })
        .collect();
    let relations = if variants.is_empty() {
        RelationSet::empty(x.series())
    } else {
        expand_powers(&base_relations(cfg, x.series(), &variants)?, cfg.powers)?
    };
    let plan = fold_plan(cfg, x.steps())?;
    let report = evaluate(&x, &relations, &plan, &specs, cfg.repeats)?;
    create_dir(dir)?;
    write_report(&report, dir)?;
    cfg.write_manifest(dir)?;
    print_summary(&report);
    Ok(())
}

pub fn grid_cmd(cfg: &RunConfig) -> CliResult {
    let dir = cfg.out_dir()?;
    let x = load_data(cfg)?;
    let relations = base_relations(cfg, x.series(), &[cfg.training.variant])?;
    let plan = fold_plan(cfg, x.steps())?;
    let report = grid_search(&x, &relations, &plan, &cfg.training, &cfg.grid, cfg.repeats)?;
    create_dir(dir)?;
    report.save_surface_csv(&dir.join("surface.csv"))?;
    write_report(&report.best_report, dir)?;
    write_json(&dir.join("best.json"), report.best_point())?;
    cfg.write_manifest(dir)?;
    let best = report.best_point();
    println!(
        "best N={} lambda={} gamma={} K={}: mean RMSE {:?}",
        best.latent_dim, best.lambda, best.gamma, best.powers, best.mean_rmse
    );
    Ok(())
}

#[derive(Serialize)]
struct StructureScore {
    auc: f64,
    pairs: usize,
    true_edges: usize,
}

pub fn discover(cfg: &RunConfig) -> CliResult {
    let dir = cfg.out_dir()?;
    let ckpt = Checkpoint::load(cfg.require(&cfg.checkpoint, "checkpoint")?)?;
    let n = ckpt.series;
    let mut outputs: Vec<(&str, String)> = Vec::new();
    let mut structure = None;
    if ckpt.variant.uses_gate() {
        let steps = ckpt.latent.steps();
        let [from, to] = cfg.time_range.unwrap_or([0, steps]);
        let dominance = gate_dominance(&ckpt.latent, &ckpt.params, &ckpt.relations, from..to.min(steps))?;
        let mut csv = String::from("t,series,relation\n");
        for (k, row) in dominance.iter().enumerate() {
            for (i, r) in row.iter().enumerate() {
                writeln!(csv, "{},{i},{r}", from + k).expect("string write");
            }
        }
        outputs.push(("gate_dominance.csv", csv));
    } else {
        let corr = extract_correlations(&ckpt.params, &ckpt.relations, ckpt.variant)?;
        let mut csv = String::from("r,i,j,weight\n");
        for (r, (_, m)) in corr.matrices.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    writeln!(csv, "{r},{i},{j},{}", m.get(i, j)).expect("string write");
                }
            }
        }
        outputs.push(("correlations.csv", csv));
        let mut dom = String::from("series,relation,label\n");
        for (i, &r) in corr.dominant.iter().enumerate() {
            writeln!(dom, "{i},{r},{}", corr.matrices[r].0).expect("string write");
        }
        outputs.push(("dominant.csv", dom));
        if let Some(path) = &cfg.truth {
            let text = fs::read_to_string(path).map_err(|e| stnn::Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let truth: GroundTruth = serde_json::from_str(&text).map_err(stnn::Error::from)?;
            let adjacency = truth.adjacency_matrix(n);
            let mut scores = Vec::with_capacity(n * n);
            let mut labels = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    scores.push(corr.matrices.iter().map(|(_, m)| m.get(i, j).abs()).sum());
                    labels.push(adjacency.get(i, j) != 0.0);
                }
            }
            let score = StructureScore {
                auc: auc(&scores, &labels)?,
                pairs: n * n,
                true_edges: labels.iter().filter(|&&l| l).count(),
            };
            println!("structure AUC {:.6} over {} pairs", score.auc, score.pairs);
            structure = Some(score);
        }
    }
    create_dir(dir)?;
    for (name, text) in &outputs {
        write_text(&dir.join(name), text)?;
    }
    if let Some(score) = &structure {
        write_json(&dir.join("structure.json"), score)?;
    }
    cfg.write_manifest(dir)?;
    println!("wrote {} into {}", outputs.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", "), dir.display());
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig) -> CliResult {
    let gc = &cfg.gradcheck;
    let mut csv = String::from("variant,max_rel_error\n");
    let mut failed = Vec::new();
    for variant in ModelVariant::ALL {
        let err = grad_check(
            gc.series,
            gc.dims,
            gc.latent_dim,
            gc.steps,
            gc.relations,
            variant,
            gc.lambda,
            gc.gamma,
            cfg.training.seed,
        )?;
        let pass = err < gc.tolerance;
        println!("{variant:<10} max relative error {err:.3e} {}", if pass { "ok" } else { "FAIL" });
        writeln!(csv, "{variant},{err:e}").expect("string write");
        if !pass {
            failed.push(variant.to_string());
        }
    }
    if let Some(dir) = &cfg.out {
        create_dir(dir)?;
        write_text(&dir.join("gradcheck.csv"), &csv)?;
        cfg.write_manifest(dir)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradCheck(format!("{} above {:e}", failed.join(", "), gc.tolerance)))
    }
}
