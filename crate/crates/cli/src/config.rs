//! The experiment file: one TOML document with `[run]`, `[data]`, `[model]`,
//! `[training]` and `[eval]` sections plus the top-level `variant`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use tpg_core::data::SynthOptions;
use tpg_core::metrics::{Metric, RandomConvEmbedder};
use tpg_core::model::{ModelConfig, Variant};
use tpg_core::objective::TrainingConfig;

use crate::error::{CliError, CliResult};

/// Set to `1` (or `true`) for byte-identical outputs across reruns:
/// wall-clock columns are written as zero and all work runs sequentially.
pub const DETERMINISTIC_ENV: &str = "TPG_DETERMINISTIC";

pub fn deterministic_mode() -> bool {
    std::env::var(DETERMINISTIC_ENV)
        .map(|v| matches!(v.trim().to_ascii_lowercase().as_str(), "1" | "true" | "yes" | "on"))
        .unwrap_or(false)
}

fn variant_from_str<E: serde::de::Error>(s: &str) -> Result<Variant, E> {
    s.parse().map_err(|e: tpg_core::Error| E::custom(e.to_string()))
}

fn de_variant<'de, D: Deserializer<'de>>(d: D) -> Result<Variant, D::Error> {
    variant_from_str(&String::deserialize(d)?)
}

fn de_variants<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Variant>, D::Error> {
    Vec::<String>::deserialize(d)?
        .iter()
        .map(|s| variant_from_str(s))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Checkpoints, logs and evaluation outputs go under this directory.
    pub dir: PathBuf,
    pub checkpoint_every: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            dir: PathBuf::from("runs"),
            checkpoint_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Dataset directory: a generated dataset (`manifest.json`, `clips/`) or
    /// a JIGSAWS-style layout (`video/`, `transcriptions/`).
    pub root: PathBuf,
    pub num_classes: usize,
    pub clips_per_class: usize,
    pub clip_length: usize,
    pub frame_size: usize,
    pub channels: usize,
    pub seed: u64,
    /// Share of each class held out for testing.
    pub test_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            root: PathBuf::from("data"),
            num_classes: 4,
            clips_per_class: 100,
            clip_length: 30,
            frame_size: 64,
            channels: 3,
            seed: 0,
            test_fraction: 0.25,
        }
    }
}

impl DataSection {
    pub fn synth_options(&self) -> SynthOptions {
        SynthOptions {
            frame_size: self.frame_size,
            channels: self.channels,
            num_classes: self.num_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Frames generated after the observed ones.
    pub horizon: usize,
    /// Samples per clip for the sampling baseline.
    pub k: usize,
    pub metrics: Vec<Metric>,
    /// Held-out clips scored, drawn evenly across classes.
    pub clip_count: usize,
    /// Absolute time steps reported in the table.
    pub time_steps: Vec<usize>,
    pub batch_size: usize,
    pub seed: u64,
    pub embedder_seed: u64,
    #[serde(deserialize_with = "de_variants")]
    pub variants: Vec<Variant>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            horizon: 20,
            k: 10,
            metrics: Metric::ALL.to_vec(),
            clip_count: 100,
            time_steps: vec![15, 20, 25, 30],
            batch_size: 16,
            seed: 0,
            embedder_seed: RandomConvEmbedder::DEFAULT_SEED,
            variants: Variant::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(deserialize_with = "de_variant")]
    pub variant: Variant,
    pub run: RunSection,
    pub data: DataSection,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variant: Variant::TpgVae,
            run: RunSection::default(),
            data: DataSection::default(),
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads and validates `path`. Relative paths inside the file are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::error::io_err(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|msg| CliError::Config {
            path: path.to_path_buf(),
            msg,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.run.dir, &mut cfg.data.root] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate().map_err(|msg| CliError::Config {
            path: path.to_path_buf(),
            msg,
        })?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        self.model.validate().map_err(|e| e.to_string())?;
        self.training.validate().map_err(|e| e.to_string())?;
        let (d, m) = (&self.data, &self.model);
        for (name, data, model) in [
            ("frame_size", d.frame_size, m.frame_size),
            ("channels", d.channels, m.channels),
            ("num_classes", d.num_classes, m.num_classes),
        ] {
            if data != model {
                return Err(format!("data.{name} = {data} but model.{name} = {model}"));
            }
        }
        if !(0.0..1.0).contains(&d.test_fraction) {
            return Err(format!("data.test_fraction must lie in [0, 1), got {}", d.test_fraction));
        }
        if d.clip_length < self.training.seq_len {
            return Err(format!(
                "data.clip_length = {} is shorter than training.seq_len = {}",
                d.clip_length, self.training.seq_len
            ));
        }
        let e = &self.eval;
        if e.horizon == 0 || e.k == 0 || e.batch_size == 0 || e.clip_count == 0 {
            return Err("eval.horizon, eval.k, eval.batch_size and eval.clip_count must be positive".into());
        }
        if e.metrics.is_empty() || e.variants.is_empty() {
            return Err("eval.metrics and eval.variants must not be empty".into());
        }
        let (lo, hi) = (self.training.t_p + 1, self.training.t_p + e.horizon);
        if let Some(t) = e.time_steps.iter().find(|t| !(lo..=hi).contains(*t)) {
            return Err(format!("eval.time_steps contains t = {t}, outside the predicted range {lo}..={hi}"));
        }
        if self.run.checkpoint_every == 0 {
            return Err("run.checkpoint_every must be positive".into());
        }
        Ok(())
    }

    /// Directory holding one variant's checkpoints and training log.
    pub fn variant_dir(&self, variant: Variant) -> PathBuf {
        self.run.dir.join(variant.name())
    }
}
