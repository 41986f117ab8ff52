use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use stnn::dataset::{SyntheticKind, SyntheticSpec, Topology};
use stnn::forecast::GridSpec;
use stnn::model::ModelVariant;
use stnn::training::{L1Update, TrainingConfig};

use crate::error::CliError;

/// Synthetic dataset settings for `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub kind: SyntheticKind,
    pub rows: usize,
    pub cols: usize,
    pub steps: usize,
    pub latent_dim: usize,
    pub noise_std: f64,
    pub alpha: f64,
    pub teacher_gain: f64,
    pub teacher_coupling: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let spec = SyntheticSpec::teacher_stnn(4, 5, 3, 200, 0.01, 0);
        Self {
            kind: spec.kind,
            rows: 4,
            cols: 5,
            steps: spec.steps,
            latent_dim: spec.latent_dim,
            noise_std: spec.noise_std,
            alpha: spec.alpha,
            teacher_gain: spec.teacher_gain,
            teacher_coupling: spec.teacher_coupling,
        }
    }
}

/// Sizes of the derivative-check instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub series: usize,
    pub dims: usize,
    pub latent_dim: usize,
    pub steps: usize,
    pub relations: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            series: 4,
            dims: 2,
            latent_dim: 3,
            steps: 6,
            relations: 2,
            lambda: 1.0,
            gamma: 0.1,
            tolerance: 1e-5,
        }
    }
}

/// Fully resolved settings of one run. Written to `manifest.json`, which can be passed back
/// with `--config` to repeat the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub version: Option<String>,
    pub series: Option<PathBuf>,
    pub relations: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dims: usize,
    pub powers: usize,
    /// Relation count for a prior-free model trained without a relations file.
    pub free_relations: usize,
    pub normalize: bool,
    /// Write measured epoch times to the trace instead of zeros (breaks byte-identical reruns).
    pub wall_clock: bool,
    pub training: TrainingConfig,
    pub horizon: usize,
    pub folds: usize,
    pub train_window: Option<usize>,
    pub models: Vec<String>,
    pub ar_lags: usize,
    pub repeats: usize,
    pub grid: GridSpec,
    pub synthetic: SyntheticConfig,
    pub gradcheck: GradCheckConfig,
    /// Time steps `[from, to)` for gate dominance output.
    pub time_range: Option<[usize; 2]>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            version: None,
            series: None,
            relations: None,
            checkpoint: None,
            truth: None,
            out: None,
            dims: 1,
            powers: 1,
            free_relations: 1,
            normalize: true,
            wall_clock: false,
            training: TrainingConfig::default(),
            horizon: 5,
            folds: 5,
            train_window: None,
            models: vec!["mean".into(), "ar".into(), "model".into()],
            ar_lags: 5,
            repeats: 1,
            grid: GridSpec::default(),
            synthetic: SyntheticConfig::default(),
            gradcheck: GradCheckConfig::default(),
            time_range: None,
        }
    }
}

fn parse_variant(s: &str) -> Result<ModelVariant, String> {
    s.parse().map_err(|e: stnn::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<SyntheticKind, String> {
    match s {
        "teacher" | "teacher_stnn" => Ok(SyntheticKind::TeacherStnn),
        "diffusion" | "grid_diffusion" => Ok(SyntheticKind::GridDiffusion),
        other => Err(format!("unknown synthetic kind {other:?} (teacher, diffusion)")),
    }
}

fn parse_l1(s: &str) -> Result<L1Update, String> {
    match s {
        "proximal" => Ok(L1Update::Proximal),
        "subgradient" => Ok(L1Update::Subgradient),
        other => Err(format!("unknown L1 update {other:?} (proximal, subgradient)")),
    }
}

/// Command-line overrides; every flag wins over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON config file (a previous run's manifest.json works)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Series CSV: one row per time step, n·m columns
    #[arg(long, global = true)]
    pub series: Option<PathBuf>,
    /// Relations CSV: label,i,j,weight
    #[arg(long, global = true)]
    pub relations: Option<PathBuf>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Ground-truth JSON written by `generate`
    #[arg(long, global = true)]
    pub truth: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Values per series and time step (m)
    #[arg(long, global = true)]
    pub dims: Option<usize>,
    #[arg(long, global = true, value_parser = parse_variant)]
    pub variant: Option<ModelVariant>,
    #[arg(long, global = true)]
    pub latent_dim: Option<usize>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Number of relation powers K
    #[arg(long, global = true)]
    pub powers: Option<usize>,
    #[arg(long, global = true)]
    pub free_relations: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub momentum: Option<f64>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    /// Gradient norm clipping threshold
    #[arg(long, global = true)]
    pub clip: Option<f64>,
    #[arg(long, global = true, value_parser = parse_l1)]
    pub l1_update: Option<L1Update>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub train_window: Option<usize>,
    /// Comma list of mean, ar, model, or variant names
    #[arg(long, global = true, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    #[arg(long, global = true)]
    pub ar_lags: Option<usize>,
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub grid_latent_dims: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub grid_lambdas: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub grid_gammas: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub grid_powers: Option<Vec<usize>>,
    /// Synthetic kind: teacher or diffusion
    #[arg(long, global = true, value_parser = parse_kind)]
    pub kind: Option<SyntheticKind>,
    #[arg(long, global = true)]
    pub rows: Option<usize>,
    #[arg(long, global = true)]
    pub cols: Option<usize>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub noise: Option<f64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Teacher intra-series gain
    #[arg(long, global = true)]
    pub gain: Option<f64>,
    /// Teacher neighbour coupling scale
    #[arg(long, global = true)]
    pub coupling: Option<f64>,
    /// First time step of the gate dominance range
    #[arg(long, global = true)]
    pub from: Option<usize>,
    /// End (exclusive) of the gate dominance range
    #[arg(long, global = true)]
    pub to: Option<usize>,
    #[arg(long, global = true)]
    pub no_normalize: bool,
    #[arg(long, global = true)]
    pub wall_clock: bool,
}

macro_rules! set {
    ($flag:expr => $target:expr) => {
        if let Some(v) = $flag.clone() {
            $target = v;
        }
    };
}

macro_rules! set_some {
    ($flag:expr => $target:expr) => {
        if $flag.is_some() {
            $target = $flag.clone();
        }
    };
}

impl RunConfig {
    /// Defaults, overridden by the `--config` file, overridden by flags.
    pub fn resolve(command: &str, flags: &Flags) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        if let Some(recorded) = &cfg.command {
            if recorded != command {
                return Err(CliError::Config(format!(
                    "config was recorded for `{recorded}`, not `{command}`"
                )));
            }
        }
        cfg.command = Some(command.into());
        cfg.version = Some(env!("CARGO_PKG_VERSION").into());
        cfg.apply(flags);
        Ok(cfg)
    }

    fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| stnn::Error::Io {
            path: path.into(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    fn apply(&mut self, f: &Flags) {
        set_some!(f.series => self.series);
        set_some!(f.relations => self.relations);
        set_some!(f.checkpoint => self.checkpoint);
        set_some!(f.truth => self.truth);
        set_some!(f.out => self.out);
        set!(f.dims => self.dims);
        set!(f.powers => self.powers);
        set!(f.free_relations => self.free_relations);
        set!(f.horizon => self.horizon);
        set!(f.folds => self.folds);
        set_some!(f.train_window => self.train_window);
        set!(f.models => self.models);
        set!(f.ar_lags => self.ar_lags);
        set!(f.repeats => self.repeats);

        let t = &mut self.training;
        set!(f.variant => t.variant);
        set!(f.latent_dim => t.latent_dim);
        set!(f.lambda => t.lambda);
        set!(f.gamma => t.gamma);
        set!(f.epochs => t.epochs);
        set!(f.lr => t.learning_rate);
        set!(f.momentum => t.momentum);
        set!(f.batch => t.batch_pairs);
        set_some!(f.clip => t.clip_norm);
        set!(f.l1_update => t.l1_update);
        set!(f.seed => t.seed);

        set!(f.grid_latent_dims => self.grid.latent_dims);
        set!(f.grid_lambdas => self.grid.lambdas);
        set!(f.grid_gammas => self.grid.gammas);
        set!(f.grid_powers => self.grid.powers);

        let s = &mut self.synthetic;
        set!(f.kind => s.kind);
        set!(f.rows => s.rows);
        set!(f.cols => s.cols);
        set!(f.steps => s.steps);
        set!(f.noise => s.noise_std);
        set!(f.alpha => s.alpha);
        set!(f.gain => s.teacher_gain);
        set!(f.coupling => s.teacher_coupling);

        if self.command.as_deref() == Some("generate") {
            set!(f.latent_dim => self.synthetic.latent_dim);
        }
        if self.command.as_deref() == Some("gradcheck") {
            set!(f.lambda => self.gradcheck.lambda);
            set!(f.gamma => self.gradcheck.gamma);
            set!(f.latent_dim => self.gradcheck.latent_dim);
            set!(f.dims => self.gradcheck.dims);
            set!(f.steps => self.gradcheck.steps);
        }
        if f.from.is_some() || f.to.is_some() {
            let [from, to] = self.time_range.unwrap_or([0, usize::MAX]);
            self.time_range = Some([f.from.unwrap_or(from), f.to.unwrap_or(to)]);
        }
        if f.no_normalize {
            self.normalize = false;
        }
        if f.wall_clock {
            self.wall_clock = true;
        }
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        let s = &self.synthetic;
        SyntheticSpec {
            kind: s.kind,
            series: s.rows * s.cols,
            dims: self.dims,
            latent_dim: s.latent_dim,
            steps: s.steps,
            topology: Topology::Grid { rows: s.rows, cols: s.cols },
            noise_std: s.noise_std,
            seed: self.training.seed,
            alpha: s.alpha,
            initial_state: None,
            teacher_gain: s.teacher_gain,
            teacher_coupling: s.teacher_coupling,
        }
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config("--out is required for this command".into()))
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
        path.as_deref()
            .ok_or_else(|| CliError::Config(format!("--{flag} is required for this command")))
    }

    pub fn write_manifest(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self).map_err(stnn::Error::from)?;
        std::fs::write(&path, json + "\n").map_err(|e| stnn::Error::Io { path, source: e })?;
        Ok(())
    }
}
