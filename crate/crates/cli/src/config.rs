//! Run configuration: one TOML file, every section optional with defaults,
//! command-line flags layered on top by the individual commands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use gridloc_core::annotations::AnnotationFormat;
use gridloc_core::decode::LocalizerConfig;
use gridloc_core::eval::EvalConfig;
use gridloc_core::loss::LossConfig;
use gridloc_core::net::WidthConfig;
use gridloc_core::train::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub annotations: PathBuf,
    pub images: PathBuf,
    pub format: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            annotations: PathBuf::from("annotations.txt"),
            images: PathBuf::from("images.txt"),
            format: "plain".into(),
        }
    }
}

impl DatasetConfig {
    pub fn format(&self) -> Result<AnnotationFormat> {
        self.format.parse().map_err(anyhow::Error::from)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub window_scale: f64,
    pub samples_per_frame: usize,
    pub seed: u64,
    pub archive_dir: PathBuf,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            window_scale: 2.0,
            samples_per_frame: 3,
            seed: 0,
            archive_dir: PathBuf::from("archive"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub init_seed: u64,
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            shuffle_seed: d.shuffle_seed,
            init_seed: 0,
            checkpoint_every: d.checkpoint_every,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerSection {
    pub window_scale: f64,
}

impl Default for TrackerSection {
    fn default() -> Self {
        Self { window_scale: 2.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub runs: usize,
    pub jitter: f64,
    pub seed: u64,
    pub segments: usize,
    pub failure_iou: f64,
    pub failure_frames: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = EvalConfig::default();
        Self {
            runs: 1,
            jitter: 0.1,
            seed: 0,
            segments: d.segments,
            failure_iou: d.failure_iou,
            failure_frames: d.failure_frames,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

fn default_loss() -> LossConfig {
    LossConfig::default()
}

fn default_localizer() -> LocalizerConfig {
    LocalizerConfig::default()
}

fn default_network() -> WidthConfig {
    WidthConfig::default()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub prepare: PrepareConfig,
    #[serde(default = "default_network")]
    pub network: WidthConfig,
    pub train: TrainSection,
    #[serde(default = "default_loss")]
    pub loss: LossConfig,
    #[serde(default = "default_localizer")]
    pub localizer: LocalizerConfig,
    pub tracker: TrackerSection,
    pub eval: EvalSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Rejects any nested invariant violation before a command starts.
    pub fn validate(&self) -> Result<()> {
        self.dataset.format()?;
        self.network.validate()?;
        self.loss.validate()?;
        self.localizer.validate()?;
        self.train_config().validate()?;
        self.eval_config().validate()?;
        if !(self.prepare.window_scale.is_finite() && self.prepare.window_scale >= 1.0) {
            bail!(
                "prepare.window_scale must be >= 1, got {}",
                self.prepare.window_scale
            );
        }
        if self.prepare.samples_per_frame == 0 {
            bail!("prepare.samples_per_frame must be at least 1");
        }
        if self.eval.runs == 0 {
            bail!("eval.runs must be at least 1");
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            shuffle_seed: self.train.shuffle_seed,
            loss: self.loss,
            checkpoint_every: self.train.checkpoint_every,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            window_scale: self.tracker.window_scale,
            localizer: self.localizer,
            segments: self.eval.segments,
            failure_iou: self.eval.failure_iou,
            failure_frames: self.eval.failure_frames,
        }
    }

    /// Paths in the config are relative to the config file's directory.
    pub fn anchor_paths(&mut self, config_path: &Path) {
        let base = config_path.parent().unwrap_or_else(|| Path::new("."));
        let anchor = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        anchor(&mut self.dataset.annotations);
        anchor(&mut self.dataset.images);
        anchor(&mut self.prepare.archive_dir);
        anchor(&mut self.output.dir);
    }
}
