//! Run configuration: a `key = value` text file plus command-line
//! overrides, with the overrides winning. The effective configuration has
//! a canonical rendering whose hash is stamped into every output file.

use std::path::{Path, PathBuf};

use volcast_core::cvae::{CvaeArch, TrainConfig};
use volcast_core::date::CivilDate;
use volcast_core::features::ModelKind;
use volcast_core::forecaster::UpdateMode;
use volcast_core::persist::fnv1a64;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Long,
    Rolling,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Long => "long",
            Task::Rolling => "rolling",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub panel: PathBuf,
    pub metadata: PathBuf,
    pub calendar: PathBuf,
    pub train_start: CivilDate,
    pub train_end: CivilDate,
    pub test_start: CivilDate,
    pub test_end: CivilDate,
    pub model_kind: ModelKind,
    pub latent_dim: usize,
    pub sigma_train: f64,
    pub sigma_generate: f64,
    pub samples: usize,
    pub horizon: usize,
    pub seed: u64,
    pub outdir: PathBuf,
    pub workers: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    pub patience: usize,
    pub tolerance_factor: f64,
    pub mc_samples: usize,
    /// Empty means: use the preset widths for the model kind.
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
}

/// Command-line overrides; flags win over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub task: Option<Task>,
    pub sigma: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub zero_rb: bool,
    pub set_x1: Option<f64>,
    pub update_mode: Option<UpdateMode>,
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| {
        CliError::Usage(format!(
            "config key `{key}`: expected integer, got `{value}`"
        ))
    })
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value.parse().map_err(|_| {
        CliError::Usage(format!(
            "config key `{key}`: expected number, got `{value}`"
        ))
    })
}

fn parse_date(key: &str, value: &str) -> Result<CivilDate> {
    CivilDate::parse(value).map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
}

fn parse_dims(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|p| parse_usize(key, p.trim()))
        .collect()
}

impl RunConfig {
    /// Parses the `key = value` config file; `#` starts a comment and blank
    /// lines are ignored. Relative paths resolve against the config file's
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &str| -> PathBuf {
            let candidate = PathBuf::from(p);
            if candidate.is_absolute() {
                candidate
            } else {
                base.join(candidate)
            }
        };

        let mut panel = None;
        let mut metadata = None;
        let mut calendar = None;
        let mut train_start = None;
        let mut train_end = None;
        let mut test_start = None;
        let mut test_end = None;
        let mut outdir = None;
        let mut config = RunConfig {
            panel: PathBuf::new(),
            metadata: PathBuf::new(),
            calendar: PathBuf::new(),
            train_start: CivilDate::new(2021, 1, 1).expect("valid"),
            train_end: CivilDate::new(2022, 12, 31).expect("valid"),
            test_start: CivilDate::new(2023, 1, 1).expect("valid"),
            test_end: CivilDate::new(2023, 6, 30).expect("valid"),
            model_kind: ModelKind::Univariate,
            latent_dim: 1,
            sigma_train: 1.0,
            sigma_generate: 0.1,
            samples: 100,
            horizon: 120,
            seed: 7,
            outdir: PathBuf::new(),
            workers: 1,
            max_epochs: 500,
            batch_size: 32,
            learning_rate: 1e-3,
            validation_fraction: 0.1,
            patience: 3,
            tolerance_factor: 1.01,
            mc_samples: 1,
            encoder_hidden: Vec::new(),
            decoder_hidden: Vec::new(),
        };

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "panel" => panel = Some(resolve(value)),
                "metadata" => metadata = Some(resolve(value)),
                "calendar" => calendar = Some(resolve(value)),
                "outdir" => outdir = Some(resolve(value)),
                "train_start" => train_start = Some(parse_date(key, value)?),
                "train_end" => train_end = Some(parse_date(key, value)?),
                "test_start" => test_start = Some(parse_date(key, value)?),
                "test_end" => test_end = Some(parse_date(key, value)?),
                "model_kind" => config.model_kind = match value {
                    "univariate" => ModelKind::Univariate,
                    "multivariate" => ModelKind::Multivariate,
                    other => return Err(CliError::Usage(format!(
                        "config key `model_kind`: expected univariate|multivariate, got `{other}`"
                    ))),
                },
                "latent_dim" => config.latent_dim = parse_usize(key, value)?,
                "sigma_train" => config.sigma_train = parse_f64(key, value)?,
                "sigma_generate" => config.sigma_generate = parse_f64(key, value)?,
                "samples" => config.samples = parse_usize(key, value)?,
                "horizon" => config.horizon = parse_usize(key, value)?,
                "seed" => {
                    config.seed = value.parse().map_err(|_| {
                        CliError::Usage(format!(
                            "config key `seed`: expected integer, got `{value}`"
                        ))
                    })?
                }
                "workers" => config.workers = parse_usize(key, value)?,
                "max_epochs" => config.max_epochs = parse_usize(key, value)?,
                "batch_size" => config.batch_size = parse_usize(key, value)?,
                "learning_rate" => config.learning_rate = parse_f64(key, value)?,
                "validation_fraction" => config.validation_fraction = parse_f64(key, value)?,
                "patience" => config.patience = parse_usize(key, value)?,
                "tolerance_factor" => config.tolerance_factor = parse_f64(key, value)?,
                "mc_samples" => config.mc_samples = parse_usize(key, value)?,
                "encoder_hidden" => config.encoder_hidden = parse_dims(key, value)?,
                "decoder_hidden" => config.decoder_hidden = parse_dims(key, value)?,
                other => return Err(CliError::Usage(format!("unknown config key `{other}`"))),
            }
        }

        config.panel = panel.ok_or_else(|| CliError::Usage("config misses `panel`".into()))?;
        config.metadata =
            metadata.ok_or_else(|| CliError::Usage("config misses `metadata`".into()))?;
        config.calendar =
            calendar.ok_or_else(|| CliError::Usage("config misses `calendar`".into()))?;
        config.outdir = outdir.ok_or_else(|| CliError::Usage("config misses `outdir`".into()))?;
        config.train_start =
            train_start.ok_or_else(|| CliError::Usage("config misses `train_start`".into()))?;
        config.train_end =
            train_end.ok_or_else(|| CliError::Usage("config misses `train_end`".into()))?;
        config.test_start =
            test_start.ok_or_else(|| CliError::Usage("config misses `test_start`".into()))?;
        config.test_end =
            test_end.ok_or_else(|| CliError::Usage("config misses `test_end`".into()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.train_start > self.train_end {
            return Err(CliError::Usage(
                "train_start must not exceed train_end".into(),
            ));
        }
        if self.test_start > self.test_end {
            return Err(CliError::Usage(
                "test_start must not exceed test_end".into(),
            ));
        }
        if self.train_end >= self.test_start {
            return Err(CliError::Usage(
                "train and test ranges must be disjoint with train before test".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) || self.validation_fraction <= 0.0 {
            return Err(CliError::Usage(
                "validation_fraction must be in (0, 1)".into(),
            ));
        }
        if self.sigma_train <= 0.0 || self.sigma_generate <= 0.0 {
            return Err(CliError::Usage("sigma values must be positive".into()));
        }
        if self.samples == 0 || self.horizon == 0 || self.latent_dim == 0 {
            return Err(CliError::Usage(
                "samples, horizon, and latent_dim must be at least 1".into(),
            ));
        }
        if self.workers == 0 {
            return Err(CliError::Usage("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, overrides: &Overrides) {
        if let Some(sigma) = overrides.sigma {
            self.sigma_generate = sigma;
        }
        if let Some(samples) = overrides.samples {
            self.samples = samples;
        }
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(workers) = overrides.workers {
            self.workers = workers;
        }
    }

    /// Canonical `key = value` rendering of the effective configuration.
    pub fn canonical(&self) -> String {
        let dims = |d: &[usize]| -> String {
            d.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut lines = vec![
            format!("batch_size = {}", self.batch_size),
            format!("calendar = {}", self.calendar.display()),
            format!("decoder_hidden = {}", dims(&self.decoder_hidden)),
            format!("encoder_hidden = {}", dims(&self.encoder_hidden)),
            format!("horizon = {}", self.horizon),
            format!("latent_dim = {}", self.latent_dim),
            format!("learning_rate = {}", self.learning_rate),
            format!("max_epochs = {}", self.max_epochs),
            format!("mc_samples = {}", self.mc_samples),
            format!(
                "model_kind = {}",
                match self.model_kind {
                    ModelKind::Univariate => "univariate",
                    ModelKind::Multivariate => "multivariate",
                }
            ),
            format!("metadata = {}", self.metadata.display()),
            format!("outdir = {}", self.outdir.display()),
            format!("panel = {}", self.panel.display()),
            format!("patience = {}", self.patience),
            format!("samples = {}", self.samples),
            format!("seed = {}", self.seed),
            format!("sigma_generate = {}", self.sigma_generate),
            format!("sigma_train = {}", self.sigma_train),
            format!("test_end = {}", self.test_end),
            format!("test_start = {}", self.test_start),
            format!("tolerance_factor = {}", self.tolerance_factor),
            format!("train_end = {}", self.train_end),
            format!("train_start = {}", self.train_start),
            format!("validation_fraction = {}", self.validation_fraction),
            format!("workers = {}", self.workers),
        ];
        lines.sort();
        lines.join("\n")
    }

    pub fn fingerprint(&self) -> u64 {
        fnv1a64(self.canonical().as_bytes())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            mc_samples: self.mc_samples,
            seed,
            validation_fraction: self.validation_fraction,
            tolerance_factor: self.tolerance_factor,
            patience_steps: self.patience,
            train_sigma: self.sigma_train,
            learning_rate: self.learning_rate,
        }
    }

    /// Network architecture for the configured model kind, falling back to
    /// the preset hidden widths when none are configured.
    pub fn arch(&self, n_stocks: usize) -> CvaeArch {
        let mut arch = match self.model_kind {
            ModelKind::Univariate => CvaeArch::univariate(),
            ModelKind::Multivariate => CvaeArch::multivariate(n_stocks),
        };
        arch.latent_dim = self.latent_dim;
        if !self.encoder_hidden.is_empty() {
            arch.encoder_hidden = self.encoder_hidden.clone();
        }
        if !self.decoder_hidden.is_empty() {
            arch.decoder_hidden = self.decoder_hidden.clone();
        }
        arch
    }
}
